// SPDX-License-Identifier: Apache-2.0
//
// Instrumented scalar. Kernels templated on the scalar type run unchanged with
// CountingReal, which tallies every multiply and divide; additions ride along
// free, as in a multiply-accumulate unit.

#pragma once

#include <cstdint>

#include "pdeblur/tensor.hpp"

namespace pdeblur::metrics {

struct CountingReal {
    Real v{};

    CountingReal() = default;
    CountingReal(Real x) : v(x) {} // NOLINT: implicit on purpose, mirrors Real literals in kernels

    static std::uint64_t& tally() {
        thread_local std::uint64_t n = 0;
        return n;
    }

    friend CountingReal operator*(CountingReal a, CountingReal b) {
        ++tally();
        return CountingReal(a.v * b.v);
    }
    friend CountingReal operator/(CountingReal a, CountingReal b) {
        ++tally();
        return CountingReal(a.v / b.v);
    }
    friend CountingReal operator+(CountingReal a, CountingReal b) { return CountingReal(a.v + b.v); }
    friend CountingReal operator-(CountingReal a, CountingReal b) { return CountingReal(a.v - b.v); }
    friend CountingReal operator-(CountingReal a) { return CountingReal(-a.v); }
    CountingReal& operator+=(CountingReal o) {
        v += o.v;
        return *this;
    }
    CountingReal& operator-=(CountingReal o) {
        v -= o.v;
        return *this;
    }
};

inline Real value_of(Real x) { return x; }
inline Real value_of(CountingReal x) { return x.v; }

/// RAII window that reports how many counted operations happened inside it.
class TallyScope {
public:
    TallyScope() : start_(CountingReal::tally()) {}
    std::uint64_t elapsed() const { return CountingReal::tally() - start_; }

private:
    std::uint64_t start_;
};

} // namespace pdeblur::metrics
