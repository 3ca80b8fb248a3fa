#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "kcb/error.hpp"

namespace kcb {

// Ordered key=value settings. Blank lines and lines starting with '#' are
// ignored; later keys override earlier ones.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse(std::string_view text, const std::string& origin = "<string>") {
        KvConfig cfg;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            auto nl = text.find('\n', pos);
            if (nl == std::string_view::npos) nl = text.size();
            std::string_view line = text.substr(pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            line = trim(line);
            if (line.empty() || line.front() == '#') {
                if (nl == text.size()) break;
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": expected key=value, got '" + std::string(line) + "'");
            }
            auto key = trim(line.substr(0, eq));
            if (key.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
            }
            cfg.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
            if (nl == text.size()) break;
        }
        return cfg;
    }

    static KvConfig load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    template <class Number>
    Number get(const std::string& key, Number fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return to_number<Number>(key, it->second);
    }

    std::string to_string() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

    // Copies every key of `other` into this config.
    void merge(const KvConfig& other) {
        for (const auto& [k, v] : other.values_) values_[k] = v;
    }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
        return s;
    }

    template <class Number>
    static Number to_number(const std::string& key, const std::string& text) {
        if constexpr (std::is_floating_point_v<Number>) {
            try {
                std::size_t used = 0;
                double v = std::stod(text, &used);
                if (used != text.size()) throw std::invalid_argument(text);
                return static_cast<Number>(v);
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "': not a number: '" + text + "'");
            }
        } else if constexpr (std::is_same_v<Number, bool>) {
            if (text == "1" || text == "true") return true;
            if (text == "0" || text == "false") return false;
            throw ConfigError("key '" + key + "': not a boolean: '" + text + "'");
        } else {
            Number v{};
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{} || p != text.data() + text.size()) {
                throw ConfigError("key '" + key + "': not an integer: '" + text + "'");
            }
            return v;
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace kcb
