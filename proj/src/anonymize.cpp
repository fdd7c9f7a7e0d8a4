#include "insight/anonymize.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>

#include <nlohmann/json.hpp>

#include "insight/error.hpp"

namespace insight {

namespace {

constexpr std::size_t kTokenHexLen = 8;
constexpr int kMaxRehashes = 64;

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string token_for_hash(std::uint64_t h) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ENT_%08x", static_cast<unsigned>(h & 0xffffffffu));
    return buf;
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool boundary_before(const std::string& text, std::size_t pos) {
    return pos == 0 || !is_word_char(text[pos - 1]);
}

bool boundary_after(const std::string& text, std::size_t end) {
    return end >= text.size() || !is_word_char(text[end]);
}

std::string mint_token(const std::string& name, NameVault& vault) {
    char salt_bytes[sizeof(vault.salt)];
    std::memcpy(salt_bytes, &vault.salt, sizeof(vault.salt));
    for (int attempt = 0; attempt < kMaxRehashes; ++attempt) {
        std::string material = name;
        if (attempt > 0) material += "#" + std::to_string(attempt);
        const std::uint64_t h = fnv1a(material, fnv1a({salt_bytes, sizeof(salt_bytes)}));
        std::string token = token_for_hash(h);
        auto it = vault.reverse.find(token);
        if (it == vault.reverse.end()) return token;
        if (it->second == name) return token;
    }
    fail(ErrorKind::token_collision,
         "could not mint a distinct token for '" + name + "' after " +
             std::to_string(kMaxRehashes) + " rehashes");
}

bool is_hex_lower(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
}

} // namespace

std::string encode(const std::string& text, const std::vector<std::string>& names,
                   NameVault& vault) {
    std::vector<std::string> ordered;
    for (const auto& name : names) {
        if (!name.empty()) ordered.push_back(name);
    }
    if (ordered.empty()) return text;
    // Longest match first; lexicographic tiebreak keeps the pass deterministic.
    std::sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a < b;
    });
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

    for (const auto& name : ordered) {
        if (vault.forward.find(name) == vault.forward.end()) {
            const std::string token = mint_token(name, vault);
            vault.forward[name] = token;
            vault.reverse[token] = name;
        }
    }

    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        bool replaced = false;
        if (boundary_before(text, pos)) {
            for (const auto& name : ordered) {
                if (text.compare(pos, name.size(), name) != 0) continue;
                if (!boundary_after(text, pos + name.size())) continue;
                out += vault.forward.at(name);
                pos += name.size();
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            out += text[pos];
            ++pos;
        }
    }
    return out;
}

std::vector<std::string> find_entity_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while ((pos = text.find("ENT_", pos)) != std::string::npos) {
        const std::size_t end = pos + 4 + kTokenHexLen;
        bool ok = boundary_before(text, pos) && end <= text.size();
        if (ok) {
            for (std::size_t i = pos + 4; i < end; ++i) {
                if (!is_hex_lower(text[i])) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok && !boundary_after(text, end)) ok = false;
        if (ok) {
            tokens.push_back(text.substr(pos, 4 + kTokenHexLen));
            pos = end;
        } else {
            pos += 4;
        }
    }
    return tokens;
}

DecodeResult decode(const std::string& text, const NameVault& vault) {
    DecodeResult result;
    result.text.reserve(text.size());
    std::size_t pos = 0;
    std::size_t copied = 0;
    while ((pos = text.find("ENT_", pos)) != std::string::npos) {
        const std::size_t end = pos + 4 + kTokenHexLen;
        bool ok = boundary_before(text, pos) && end <= text.size();
        if (ok) {
            for (std::size_t i = pos + 4; i < end; ++i) {
                if (!is_hex_lower(text[i])) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok && !boundary_after(text, end)) ok = false;
        if (!ok) {
            pos += 4;
            continue;
        }
        result.text.append(text, copied, pos - copied);
        const std::string token = text.substr(pos, 4 + kTokenHexLen);
        auto it = vault.reverse.find(token);
        if (it != vault.reverse.end()) {
            result.text += it->second;
        } else {
            result.text += "[UNKNOWN ENTITY]";
            ++result.leak_count;
        }
        pos = end;
        copied = end;
    }
    result.text.append(text, copied, text.size() - copied);
    return result;
}

ordered_json vault_to_json(const NameVault& vault) {
    ordered_json j;
    j["salt"] = vault.salt;
    ordered_json entries = ordered_json::array();
    for (const auto& [name, token] : vault.forward) {
        entries.push_back(ordered_json{{"name", name}, {"token", token}});
    }
    j["entries"] = std::move(entries);
    return j;
}

NameVault vault_from_json(const ordered_json& j) {
    if (!j.is_object() || !j.contains("salt") || !j.contains("entries")) {
        fail(ErrorKind::schema, "vault JSON needs 'salt' and 'entries'");
    }
    NameVault vault;
    vault.salt = j.at("salt").get<std::uint64_t>();
    for (const auto& item : j.at("entries")) {
        const std::string name = item.at("name").get<std::string>();
        const std::string token = item.at("token").get<std::string>();
        vault.forward[name] = token;
        vault.reverse[token] = name;
    }
    if (vault.forward.size() != vault.reverse.size()) {
        fail(ErrorKind::schema, "vault entries are not a bijection");
    }
    return vault;
}

} // namespace insight
