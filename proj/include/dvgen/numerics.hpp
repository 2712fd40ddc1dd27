#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvgen/linalg.hpp"
#include "dvgen/tape.hpp"

namespace dvgen {

/// Name -> slice map for a flat parameter vector. Every trainable model packs
/// into one Vector; the layout documents (and checkpoints) what lives where.
struct ParamLayout {
    struct Entry {
        std::string name;
        std::size_t offset;
        std::size_t size;
    };
    std::vector<Entry> entries;

    std::size_t total() const {
        return entries.empty() ? 0 : entries.back().offset + entries.back().size;
    }

    std::size_t add(const std::string& name, std::size_t size) {
        const std::size_t off = total();
        entries.push_back({name, off, size});
        return off;
    }

    const Entry& find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw InvalidArgument("layout has no entry named " + name);
    }

    /// Layout covers [0, total) exactly once, in order, with no gaps.
    bool covers_exactly() const {
        std::size_t expect = 0;
        for (const auto& e : entries) {
            if (e.offset != expect) return false;
            expect += e.size;
        }
        return true;
    }
};

struct ParamVector {
    Vector values;
    ParamLayout layout;

    std::span<double> slice(const std::string& name) {
        const auto& e = layout.find(name);
        return {values.data() + e.offset, e.size};
    }
    std::span<const double> slice(const std::string& name) const {
        const auto& e = layout.find(name);
        return {values.data() + e.offset, e.size};
    }
};

/// Spec'd entry point: lower Cholesky factor of a symmetric positive-definite
/// matrix. Symmetry is checked to 1e-10; the jitter schedule from linalg is
/// applied before giving up.
Matrix cholesky_factor(const Matrix& m);

/// Solves (L·Lᵀ)·x = b for each column of b given a lower factor.
Matrix solve_psd(const Matrix& chol, const Matrix& b);

using ScalarFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct ValueAndGradient {
    double value;
    Vector gradient;
};

/// Records f on a fresh tape and runs one reverse sweep. Throws
/// NonFiniteValue if the value or any partial is NaN/Inf.
ValueAndGradient value_and_gradient(const ScalarFn& f, const Vector& p);

/// Reusable-tape variant for training loops (clears, does not reallocate).
ValueAndGradient value_and_gradient(const ScalarFn& f, const Vector& p, ad::Tape& tape);

struct AdamState {
    Vector m;
    Vector v;
    std::int64_t t = 0;

    static AdamState zeros(std::size_t n) { return {Vector(n, 0.0), Vector(n, 0.0), 0}; }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One Adam descent step, in place: p -= lr * m_hat / (sqrt(v_hat) + eps).
/// Callers maximizing an objective negate the gradient.
void adam_step(Vector& p, const Vector& g, AdamState& state, double lr,
               const AdamConfig& cfg = {});

} // namespace dvgen
