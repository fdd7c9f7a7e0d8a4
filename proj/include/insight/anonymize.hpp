#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "insight/datamodel.hpp"

namespace insight {

/// Bidirectional proper-name <-> token map. Tokens are pure salted-hash
/// prefixes (`ENT_` + 8 hex chars) and carry no information about the name.
struct NameVault {
    std::uint64_t salt = 0;
    std::map<std::string, std::string> forward; // name -> token
    std::map<std::string, std::string> reverse; // token -> name

    static NameVault with_salt(std::uint64_t salt) { return NameVault{salt, {}, {}}; }

    bool operator==(const NameVault&) const = default;
};

/// Replace every word-bounded occurrence of each name with its token,
/// longest match first, extending the vault as needed. Deterministic given
/// the vault salt. Throws Error{token_collision} only after 64 rehashes.
std::string encode(const std::string& text, const std::vector<std::string>& names,
                   NameVault& vault);

struct DecodeResult {
    std::string text;
    /// ENT_-pattern tokens with no reverse entry: hallucinated entities.
    std::size_t leak_count = 0;
};

/// Restore names; unknown tokens become the literal `[UNKNOWN ENTITY]`
/// marker and are counted as leaks.
DecodeResult decode(const std::string& text, const NameVault& vault);

/// All ENT_-pattern tokens in a text, in order of appearance. The bench
/// hallucination scanner for pipelines that never built a vault.
std::vector<std::string> find_entity_tokens(const std::string& text);

ordered_json vault_to_json(const NameVault& vault);
NameVault vault_from_json(const ordered_json& j); // throws Error{schema}

} // namespace insight
