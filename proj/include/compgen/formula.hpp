#pragma once

/// @file
/// Chemical formula parsing and composition rendering.
///
/// Grammar (recursive descent):
///
///     formula  := item+
///     item     := Element [Count] | '(' item+ ')' [Count]
///     Element  := Upper Lower*        (must be one of H..Pu)
///     Count    := digits ['.' digits]
///
/// Parentheses nest at most four levels deep.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "compgen/elements.hpp"
#include "compgen/error.hpp"

namespace compgen {

/// Element -> count mapping. Entries keep first-appearance order.
class Composition {
public:
    using Entry = std::pair<std::string, double>;

    Composition() = default;

    /// Adds `count` to `symbol`, appending the element if it is new.
    void add(std::string_view symbol, double count) {
        for (auto& [sym, value] : entries_) {
            if (sym == symbol) {
                value += count;
                return;
            }
        }
        entries_.emplace_back(std::string(symbol), count);
    }

    /// Count of `symbol`, 0 if absent.
    double count(std::string_view symbol) const {
        for (const auto& [sym, value] : entries_) {
            if (sym == symbol) {
                return value;
            }
        }
        return 0.0;
    }

    bool contains(std::string_view symbol) const {
        return std::any_of(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.first == symbol; });
    }

    double total() const {
        double sum = 0.0;
        for (const auto& e : entries_) {
            sum += e.second;
        }
        return sum;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool is_fractional() const { return fractional_; }
    void set_fractional(bool value) { fractional_ = value; }

    /// Same element set with identical counts; entry order is ignored.
    friend bool operator==(const Composition& a, const Composition& b) {
        if (a.size() != b.size()) {
            return false;
        }
        return std::all_of(a.begin(), a.end(), [&](const Entry& e) {
            return b.contains(e.first) && b.count(e.first) == e.second;
        });
    }

private:
    std::vector<Entry> entries_;
    bool fractional_ = false;
};

namespace detail {

class FormulaParser {
public:
    explicit FormulaParser(std::string_view text) : text_(text) {}

    Composition parse() {
        if (text_.empty()) {
            fail(ErrorCode::SyntaxError, "empty formula");
        }
        Composition result = sequence(0);
        if (pos_ != text_.size()) {
            error("unexpected ')'");
        }
        return result;
    }

private:
    static constexpr int max_depth = 4;

    Composition sequence(int depth) {
        Composition out;
        while (pos_ < text_.size() && text_[pos_] != ')') {
            const char c = text_[pos_];
            if (c == '(') {
                if (depth + 1 > max_depth) {
                    error("parentheses nested deeper than 4 levels");
                }
                ++pos_;
                Composition inner = sequence(depth + 1);
                if (pos_ >= text_.size() || text_[pos_] != ')') {
                    error("unbalanced '('");
                }
                if (inner.empty()) {
                    error("empty group");
                }
                ++pos_;
                const double mult = optional_count();
                for (const auto& [sym, n] : inner) {
                    out.add(sym, n * mult);
                }
            } else if (c >= 'A' && c <= 'Z') {
                const std::size_t start = pos_++;
                while (pos_ < text_.size() && text_[pos_] >= 'a' && text_[pos_] <= 'z') {
                    ++pos_;
                }
                const std::string_view symbol = text_.substr(start, pos_ - start);
                if (!is_element(symbol)) {
                    fail(ErrorCode::UnknownElement, "'" + std::string(symbol) + "' at position " +
                                                        std::to_string(start) + " in '" +
                                                        std::string(text_) + "'");
                }
                out.add(symbol, optional_count());
            } else if ((c >= '0' && c <= '9') || c == '.') {
                error("count without a preceding element or group");
            } else {
                error(std::string("unexpected character '") + c + "'");
            }
        }
        return out;
    }

    double optional_count() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
            ++pos_;
        }
        if (pos_ == start) {
            if (pos_ < text_.size() && text_[pos_] == '.') {
                error("count must start with a digit");
            }
            return 1.0;
        }
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            const std::size_t frac_start = pos_;
            while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
                ++pos_;
            }
            if (pos_ == frac_start) {
                error("dangling decimal point");
            }
        }
        double value = 0.0;
        const char* first = text_.data() + start;
        const char* last = text_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last) {
            error("malformed count");
        }
        if (value == 0.0) {
            fail(ErrorCode::ZeroCount,
                 "zero count at position " + std::to_string(start) + " in '" + std::string(text_) + "'");
        }
        return value;
    }

    [[noreturn]] void error(const std::string& what) const {
        fail(ErrorCode::SyntaxError,
             what + " at position " + std::to_string(pos_) + " in '" + std::string(text_) + "'");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

inline int atomic_number_or_throw(std::string_view symbol) {
    auto z = atomic_number(symbol);
    if (!z) {
        fail(ErrorCode::UnknownElement, std::string(symbol));
    }
    return *z;
}

inline std::vector<Composition::Entry> by_atomic_number(const Composition& c) {
    std::vector<Composition::Entry> sorted(c.begin(), c.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return atomic_number_or_throw(a.first) < atomic_number_or_throw(b.first);
    });
    return sorted;
}

} // namespace detail

/// Parses a formula such as "Ba9Sc2(SiO4)6" or "O0.74La0.26".
inline Composition parse_formula(std::string_view text) {
    return detail::FormulaParser(text).parse();
}

/// Divides every count by the total, keeping element order.
inline Composition normalize_fractions(const Composition& c) {
    require(!c.empty(), ErrorCode::InvalidArgument, "cannot normalize an empty composition");
    const double total = c.total();
    require(total > 0.0, ErrorCode::InvalidArgument, "composition total must be positive");
    Composition out;
    for (const auto& [sym, n] : c) {
        out.add(sym, n / total);
    }
    out.set_fractional(true);
    return out;
}

/// Renders a fractional composition in atomic-number order with fixed
/// decimals, e.g. "Li0.29O0.58Mn0.13".
inline std::string format_composition(const Composition& c, int decimals = 2) {
    require(c.is_fractional(), ErrorCode::InvalidArgument,
            "format_composition expects a fractional composition");
    require(decimals >= 1 && decimals <= 6, ErrorCode::InvalidArgument,
            "decimals must lie in [1, 6]");
    std::string out;
    char buf[64];
    for (const auto& [sym, n] : detail::by_atomic_number(c)) {
        std::snprintf(buf, sizeof(buf), "%.*f", decimals, n);
        out += sym;
        out += buf;
    }
    return out;
}

/// Renders raw counts so that parse_formula reads them back exactly:
/// unit counts are omitted, others use the shortest round-trip decimal form.
inline std::string format_counts(const Composition& c) {
    std::string out;
    char buf[64];
    for (const auto& [sym, n] : detail::by_atomic_number(c)) {
        out += sym;
        if (n == 1.0) {
            continue;
        }
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), n, std::chars_format::fixed);
        if (ec != std::errc()) {
            fail(ErrorCode::InvalidArgument, "count not representable");
        }
        out.append(buf, ptr);
    }
    return out;
}

} // namespace compgen
