#pragma once

// Brute-force reference implementations used to check the evaluator and matcher.
// Inputs are exact rationals; everything is computed in integer arithmetic and only converted at the end.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace zoosight::test {

struct Rational {
    __int128 num = 0;
    __int128 den = 1;

    Rational() = default;
    Rational(__int128 n, __int128 d = 1) : num(n), den(d) { normalize(); }

    void normalize() {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        __int128 a = num < 0 ? -num : num;
        __int128 b = den;
        while (b != 0) {
            const __int128 t = a % b;
            a = b;
            b = t;
        }
        if (a > 1) {
            num /= a;
            den /= a;
        }
    }
    double value() const { return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den)); }

    friend Rational operator+(Rational a, Rational b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
    friend Rational operator-(Rational a, Rational b) { return {a.num * b.den - b.num * a.den, a.den * b.den}; }
    friend Rational operator*(Rational a, Rational b) { return {a.num * b.num, a.den * b.den}; }
    friend Rational operator/(Rational a, Rational b) { return {a.num * b.den, a.den * b.num}; }
    friend bool operator<(Rational a, Rational b) { return a.num * b.den < b.num * a.den; }
    friend bool operator<=(Rational a, Rational b) { return !(b < a); }
    friend bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
};

inline Rational abs(Rational r) { return r.num < 0 ? Rational(-r.num, r.den) : r; }

struct OracleRecord {
    std::string predicted;
    std::optional<std::string> truth;
    Rational confidence;
};

inline Rational oracle_micro(const std::vector<OracleRecord>& rs) {
    __int128 correct = 0;
    for (const auto& r : rs) correct += (r.truth && *r.truth == r.predicted) ? 1 : 0;
    return {correct, static_cast<__int128>(rs.size())};
}

inline Rational oracle_macro(const std::vector<OracleRecord>& rs) {
    std::map<std::string, std::pair<__int128, __int128>> per;
    for (const auto& r : rs) {
        auto& [c, t] = per[*r.truth];
        ++t;
        if (*r.truth == r.predicted) ++c;
    }
    Rational sum(0);
    for (const auto& [label, ct] : per) sum = sum + Rational(ct.first, ct.second);
    return sum / Rational(static_cast<__int128>(per.size()));
}

struct OracleAbstain {
    Rational abstain_rate;
    std::optional<Rational> confident_accuracy;
};

inline OracleAbstain oracle_abstain(const std::vector<OracleRecord>& rs, Rational p) {
    __int128 accepted = 0;
    __int128 correct = 0;
    for (const auto& r : rs) {
        if (p <= r.confidence) {
            ++accepted;
            if (r.truth && *r.truth == r.predicted) ++correct;
        }
    }
    const auto total = static_cast<__int128>(rs.size());
    OracleAbstain out{Rational(total - accepted, total), std::nullopt};
    if (accepted > 0) out.confident_accuracy = Rational(correct, accepted);
    return out;
}

struct OracleCalibration {
    Rational ece;
    Rational mce;
    Rational ace;
    std::vector<__int128> counts;
};

/// Bins B_i = ((i-1)/n, i/n], with confidence 0 in B_1.
inline OracleCalibration oracle_calibration(const std::vector<OracleRecord>& rs, int n) {
    std::vector<std::vector<const OracleRecord*>> bins(static_cast<std::size_t>(n));
    for (const auto& r : rs) {
        int i = 1;
        while (i < n && Rational(i, n) < r.confidence) ++i;
        bins[static_cast<std::size_t>(i - 1)].push_back(&r);
    }
    OracleCalibration out;
    const auto total = static_cast<__int128>(rs.size());
    __int128 non_empty = 0;
    Rational gap_sum(0);
    for (const auto& bin : bins) {
        out.counts.push_back(static_cast<__int128>(bin.size()));
        if (bin.empty()) continue;
        __int128 correct = 0;
        Rational conf_sum(0);
        for (const auto* r : bin) {
            if (r->truth && *r->truth == r->predicted) ++correct;
            conf_sum = conf_sum + r->confidence;
        }
        const auto size = static_cast<__int128>(bin.size());
        const Rational gap = abs(Rational(correct, size) - conf_sum / Rational(size));
        out.ece = out.ece + Rational(size, total) * gap;
        if (out.mce < gap) out.mce = gap;
        gap_sum = gap_sum + gap;
        ++non_empty;
    }
    out.ace = gap_sum / Rational(non_empty);
    return out;
}

/// Label with the highest count; ties go to the smallest label.
inline std::pair<std::string, int> oracle_vote(const std::vector<std::string>& labels) {
    std::map<std::string, int> counts;
    for (const auto& l : labels) ++counts[l];
    std::pair<std::string, int> best{"", 0};
    for (const auto& [label, count] : counts) {
        if (count > best.second) best = {label, count};
    }
    return best;
}

}  // namespace zoosight::test
