#include "insight/chunk.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"

namespace insight {

const char* to_string(ChunkStrategy strategy) {
    switch (strategy) {
        case ChunkStrategy::temporal: return "temporal";
        case ChunkStrategy::categorical: return "categorical";
        case ChunkStrategy::budget: return "budget";
    }
    return "budget";
}

ChunkStrategy chunk_strategy_from_string(const std::string& s) {
    if (s == "temporal") return ChunkStrategy::temporal;
    if (s == "categorical") return ChunkStrategy::categorical;
    if (s == "budget") return ChunkStrategy::budget;
    fail(ErrorKind::config, "unknown chunk strategy '" + s + "'");
}

std::size_t estimate_tokens(std::string_view text) {
    return (text.size() + 3) / 4;
}

std::string serialize_rows(const Dataset& d, const std::vector<std::size_t>& indices) {
    return rows_to_json(d, indices).dump();
}

namespace {

/// Greedy packing of one ordered group into budget-sized pieces, measured on
/// the serialized row block.
std::vector<std::vector<std::size_t>> split_by_budget(const Dataset& d,
                                                      const std::vector<std::size_t>& group,
                                                      std::size_t budget_tokens,
                                                      const TokenEstimator& estimate) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> current;
    for (std::size_t idx : group) {
        if (estimate(serialize_rows(d, {idx})) > budget_tokens) {
            fail(ErrorKind::row_too_large,
                 "row " + std::to_string(idx) + " alone exceeds the token budget");
        }
        current.push_back(idx);
        if (estimate(serialize_rows(d, current)) > budget_tokens) {
            current.pop_back();
            out.push_back(std::move(current));
            current = {idx};
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

} // namespace

ChunkPlan plan_chunks(const Dataset& d, const ChunkSpec& spec, TokenEstimator estimator) {
    if (!estimator) estimator = [](std::string_view text) { return estimate_tokens(text); };
    if (spec.budget_tokens == 0) fail(ErrorKind::config, "chunk budget must be > 0");

    ChunkPlan plan;
    plan.spec = spec;
    if (d.rows.empty()) return plan;

    std::vector<std::vector<std::size_t>> groups;
    switch (spec.strategy) {
        case ChunkStrategy::budget: {
            std::vector<std::size_t> all(d.rows.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            groups.push_back(std::move(all));
            break;
        }
        case ChunkStrategy::temporal: {
            std::map<int, std::vector<std::size_t>> by_month;
            for (std::size_t i = 0; i < d.rows.size(); ++i) {
                by_month[d.rows[i].date.month_index()].push_back(i);
            }
            for (auto& [_, indices] : by_month) groups.push_back(std::move(indices));
            break;
        }
        case ChunkStrategy::categorical: {
            if (spec.dimension.empty() ||
                std::find(d.dimensions.begin(), d.dimensions.end(), spec.dimension) ==
                    d.dimensions.end()) {
                fail(ErrorKind::config,
                     "categorical chunking needs a dataset dimension, got '" + spec.dimension + "'");
            }
            std::map<std::string, std::vector<std::size_t>> by_value;
            for (std::size_t i = 0; i < d.rows.size(); ++i) {
                auto it = d.rows[i].dims.find(spec.dimension);
                by_value[it == d.rows[i].dims.end() ? std::string{} : it->second].push_back(i);
            }
            for (auto& [_, indices] : by_value) groups.push_back(std::move(indices));
            break;
        }
    }

    for (const auto& group : groups) {
        auto pieces = split_by_budget(d, group, spec.budget_tokens, estimator);
        plan.chunks.insert(plan.chunks.end(), std::make_move_iterator(pieces.begin()),
                           std::make_move_iterator(pieces.end()));
    }
    return plan;
}

} // namespace insight
