#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dvgen/errors.hpp"

namespace dvgen::ad {

class Tape;

/// A scalar on the tape. idx < 0 means a plain constant that never touched
/// the tape; arithmetic folds constants so literals cost nothing.
struct Var {
    double v = 0.0;
    std::int32_t idx = -1;
    Tape* tape = nullptr;

    Var() = default;
    Var(double value) : v(value) {} // NOLINT: implicit by design, constants promote freely
    Var(double value, std::int32_t i, Tape* t) : v(value), idx(i), tape(t) {}

    double val() const { return v; }
    bool is_const() const { return idx < 0; }
};

/// Reverse-mode tape: every recorded node stores a list of (parent, local
/// partial) edges; backward() is one linear sweep. Memory is reused across
/// evaluations via clear().
class Tape {
public:
    Var input(double value) {
        const auto i = begin_node(value);
        end_node();
        return Var(value, i, this);
    }

    void clear() {
        values_.clear();
        nodes_.clear();
        parents_.clear();
        partials_.clear();
        adjoints_.clear();
    }

    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(output)=1 and accumulates adjoints for every node.
    void backward(const Var& output) {
        if (output.is_const()) throw InvalidArgument("backward: output is a constant");
        assert(output.tape == this);
        adjoints_.assign(nodes_.size(), 0.0);
        adjoints_[static_cast<std::size_t>(output.idx)] = 1.0;
        for (std::int64_t i = output.idx; i >= 0; --i) {
            const double a = adjoints_[static_cast<std::size_t>(i)];
            if (a == 0.0) continue;
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            for (std::uint32_t e = n.begin; e < n.end; ++e) {
                adjoints_[parents_[e]] += a * partials_[e];
            }
        }
    }

    double adjoint(const Var& x) const {
        if (x.is_const()) return 0.0;
        assert(x.tape == this);
        return adjoints_[static_cast<std::size_t>(x.idx)];
    }

    // Recording primitives. Node construction is begin/edge.../end so n-ary
    // ops (dot, sum) record one node instead of a chain.
    std::int32_t begin_node(double value) {
        values_.push_back(value);
        nodes_.push_back({static_cast<std::uint32_t>(parents_.size()),
                          static_cast<std::uint32_t>(parents_.size())});
        return static_cast<std::int32_t>(nodes_.size()) - 1;
    }

    void edge(std::int32_t parent, double partial) {
        parents_.push_back(static_cast<std::uint32_t>(parent));
        partials_.push_back(partial);
        nodes_.back().end++;
    }

    void end_node() {}

    Var unary(double value, const Var& a, double da) {
        const auto i = begin_node(value);
        if (!a.is_const()) edge(a.idx, da);
        end_node();
        return Var(value, i, this);
    }

    Var binary(double value, const Var& a, double da, const Var& b, double db) {
        const auto i = begin_node(value);
        if (!a.is_const()) edge(a.idx, da);
        if (!b.is_const()) edge(b.idx, db);
        end_node();
        return Var(value, i, this);
    }

private:
    struct Node {
        std::uint32_t begin;
        std::uint32_t end;
    };

    std::vector<double> values_;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> parents_;
    std::vector<double> partials_;
    std::vector<double> adjoints_;
};

inline Tape* tape_of(const Var& a, const Var& b) {
    Tape* t = a.tape ? a.tape : b.tape;
    assert(!(a.tape && b.tape && a.tape != b.tape));
    return t;
}

// ---- arithmetic -----------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v + b.v);
    return t->binary(a.v + b.v, a, 1.0, b, 1.0);
}

inline Var operator-(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v - b.v);
    return t->binary(a.v - b.v, a, 1.0, b, -1.0);
}

inline Var operator*(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v * b.v);
    return t->binary(a.v * b.v, a, b.v, b, a.v);
}

inline Var operator/(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v / b.v);
    return t->binary(a.v / b.v, a, 1.0 / b.v, b, -a.v / (b.v * b.v));
}

inline Var operator-(const Var& a) {
    if (a.is_const()) return Var(-a.v);
    return a.tape->unary(-a.v, a, -1.0);
}

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<=(const Var& a, const Var& b) { return a.v <= b.v; }
inline bool operator>=(const Var& a, const Var& b) { return a.v >= b.v; }

// ---- elementary functions -------------------------------------------------

inline Var exp(const Var& a) {
    const double e = std::exp(a.v);
    if (a.is_const()) return Var(e);
    return a.tape->unary(e, a, e);
}

inline Var log(const Var& a) {
    if (a.is_const()) return Var(std::log(a.v));
    return a.tape->unary(std::log(a.v), a, 1.0 / a.v);
}

inline Var sqrt(const Var& a) {
    const double s = std::sqrt(a.v);
    if (a.is_const()) return Var(s);
    return a.tape->unary(s, a, 0.5 / s);
}

inline Var tanh(const Var& a) {
    const double th = std::tanh(a.v);
    if (a.is_const()) return Var(th);
    return a.tape->unary(th, a, 1.0 - th * th);
}

inline Var sigmoid(const Var& a) {
    const double s = 1.0 / (1.0 + std::exp(-a.v));
    if (a.is_const()) return Var(s);
    return a.tape->unary(s, a, s * (1.0 - s));
}

inline Var softplus(const Var& a) {
    // log1p(exp(x)) with the large-x branch to avoid overflow
    const double sp = a.v > 30.0 ? a.v : std::log1p(std::exp(a.v));
    const double d = 1.0 / (1.0 + std::exp(-a.v));
    if (a.is_const()) return Var(sp);
    return a.tape->unary(sp, a, d);
}

inline Var square(const Var& a) {
    if (a.is_const()) return Var(a.v * a.v);
    return a.tape->unary(a.v * a.v, a, 2.0 * a.v);
}

inline double val(const Var& a) { return a.v; }

// ---- fused n-ary ops ------------------------------------------------------

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    Tape* t = nullptr;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i].v * b[i].v;
        if (!t) t = a[i].tape ? a[i].tape : b[i].tape;
    }
    if (!t) return Var(s);
    const auto idx = t->begin_node(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_const()) t->edge(a[i].idx, b[i].v);
        if (!b[i].is_const()) t->edge(b[i].idx, a[i].v);
    }
    t->end_node();
    return Var(s, idx, t);
}

inline Var dot(std::span<const Var> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    Tape* t = nullptr;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i].v * b[i];
        if (!t) t = a[i].tape;
    }
    if (!t) return Var(s);
    const auto idx = t->begin_node(s);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_const()) t->edge(a[i].idx, b[i]);
    }
    t->end_node();
    return Var(s, idx, t);
}

inline Var sum(std::span<const Var> a) {
    double s = 0.0;
    Tape* t = nullptr;
    for (const Var& x : a) {
        s += x.v;
        if (!t) t = x.tape;
    }
    if (!t) return Var(s);
    const auto idx = t->begin_node(s);
    for (const Var& x : a) {
        if (!x.is_const()) t->edge(x.idx, 1.0);
    }
    t->end_node();
    return Var(s, idx, t);
}

} // namespace dvgen::ad

namespace dvgen {

// double counterparts so templated numerical code compiles for both scalar
// types; the Var versions are found through ADL.
inline double val(double x) { return x; }
inline double square(double x) { return x * x; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sum(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s += x;
    return s;
}

} // namespace dvgen
