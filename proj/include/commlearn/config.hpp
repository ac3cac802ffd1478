#pragma once

#include <cstdlib>
#include <map>

#include "csv.hpp"

namespace commlearn {

// Flat key = value configuration with dotted section keys and # comments.
// The original text is kept so a run can archive its config verbatim.
struct KvConfig {
    std::map<std::string, std::string> kv;
    std::string raw;

    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static KvConfig parse_text(const std::string& text) {
        KvConfig cfg;
        cfg.raw = text;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            const size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config: missing '=' on line " + std::to_string(lineno));
            const std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
            cfg.kv[key] = trim(t.substr(eq + 1));
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) { return parse_text(read_text_file(path)); }

    bool has(const std::string& key) const { return kv.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { kv[key] = value; }

    std::string get_str(const std::string& key, const std::string& def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    }

    std::string require_str(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument("config: missing required key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        return parse_double(key, it->second);
    }

    int get_int(const std::string& key, int def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        return parse_int(key, it->second);
    }

    bool get_bool(const std::string& key, bool def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
    }

    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        std::vector<int> out;
        std::istringstream is(it->second);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) out.push_back(parse_int(key, tok));
        }
        if (out.empty()) throw std::invalid_argument("config: empty list for '" + key + "'");
        return out;
    }

    std::vector<uint64_t> get_u64_list(const std::string& key, const std::vector<uint64_t>& def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        std::vector<uint64_t> out;
        std::istringstream is(it->second);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            tok = trim(tok);
            if (tok.empty()) continue;
            try {
                size_t pos = 0;
                out.push_back(std::stoull(tok, &pos));
                if (pos != tok.size()) throw std::invalid_argument("");
            } catch (...) {
                throw std::invalid_argument("config: bad integer in '" + key + "': " + tok);
            }
        }
        return out;
    }

private:
    static double parse_double(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (...) {
            throw std::invalid_argument("config: bad number for '" + key + "': " + v);
        }
    }

    static int parse_int(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const long d = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return int(d);
        } catch (...) {
            throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
        }
    }
};

// Environment-variable overrides: key env.n_agents is overridden by
// COMMLEARN_env_n_agents. Applied for every key in the known-key registry.
inline void apply_env_overrides(KvConfig& cfg, const std::vector<std::string>& known_keys,
                                const std::string& prefix = "COMMLEARN_") {
    for (const auto& key : known_keys) {
        std::string var = prefix;
        for (char c : key) var += (c == '.') ? '_' : c;
        if (const char* v = std::getenv(var.c_str())) cfg.set(key, v);
    }
}

} // namespace commlearn
