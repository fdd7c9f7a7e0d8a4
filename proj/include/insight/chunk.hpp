#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "insight/datamodel.hpp"

namespace insight {

enum class ChunkStrategy { temporal, categorical, budget };

const char* to_string(ChunkStrategy strategy);
ChunkStrategy chunk_strategy_from_string(const std::string& s); // throws Error{config}

struct ChunkSpec {
    ChunkStrategy strategy = ChunkStrategy::budget;
    std::string dimension;            // categorical only
    std::size_t budget_tokens = 8192; // applies to the serialized row block
};

/// Pairwise-disjoint, covering, deterministic row-index groups. Rows keep
/// dataset order within each chunk.
struct ChunkPlan {
    ChunkSpec spec;
    std::vector<std::vector<std::size_t>> chunks;
};

using TokenEstimator = std::function<std::size_t(std::string_view)>;

/// Default heuristic: ceil(bytes / 4). Deterministic and monotone in length.
std::size_t estimate_tokens(std::string_view text);

/// Serialized row block for a chunk (compact JSON array); the exact text the
/// token budget is measured against and the prompt embeds.
std::string serialize_rows(const Dataset& d, const std::vector<std::size_t>& indices);

/// Strategy-first grouping (months / dimension values), then budget
/// subdivision of any group whose serialization overflows. Throws
/// Error{row_too_large} if a single row exceeds the budget.
ChunkPlan plan_chunks(const Dataset& d, const ChunkSpec& spec, TokenEstimator estimator = {});

} // namespace insight
