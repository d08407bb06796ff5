// quadrature.hpp - globally adaptive Gauss-Kronrod (7/15) integration over a
// caller-supplied panel partition.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "dephase/errors.hpp"

namespace dephase::quad {

struct Result {
    double value = 0.0;
    double error = 0.0;
    std::size_t intervals = 0;
};

struct Estimate {
    double a, b, value, error;
    bool operator<(const Estimate& other) const { return error < other.error; }
};

template <class F>
Estimate gauss_kronrod_15(const F& f, double a, double b) {
    static constexpr std::array<double, 8> xk = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
    static constexpr std::array<double, 8> wk = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    static constexpr std::array<double, 4> wg = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * wk[7];
    double gauss = fc * wg[3];
    double abs_sum = std::abs(kronrod);
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * xk[j];
        const double f1 = f(center - dx);
        const double f2 = f(center + dx);
        kronrod += wk[j] * (f1 + f2);
        abs_sum += wk[j] * (std::abs(f1) + std::abs(f2));
        if (j % 2 == 1) gauss += wg[j / 2] * (f1 + f2);
    }
    const double value = kronrod * half;
    double err = std::abs((kronrod - gauss) * half);
    // QUADPACK-style scaling of the raw Kronrod-Gauss difference.
    const double resabs = abs_sum * std::abs(half);
    if (resabs > 0.0 && err > 0.0) err = resabs * std::min(1.0, std::pow(200.0 * err / resabs, 1.5));
    err = std::max(err, 50.0 * 2.2e-16 * resabs);
    return Estimate{a, b, value, err};
}

// Integrates f over [edges.front(), edges.back()], refining the sub-interval
// with the largest error estimate until the summed estimate drops below
// abs_tol. Throws QuadratureError once max_intervals is exceeded.
template <class F>
Result integrate(const F& f, std::span<const double> edges, double abs_tol,
                 std::size_t max_intervals) {
    Result out;
    if (edges.size() < 2) return out;
    std::vector<Estimate> storage;
    storage.reserve(std::max<std::size_t>(2 * edges.size(), 64));
    double total = 0.0;
    double total_err = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (!(edges[i + 1] > edges[i])) continue;
        storage.push_back(gauss_kronrod_15(f, edges[i], edges[i + 1]));
        total += storage.back().value;
        total_err += storage.back().error;
    }
    std::priority_queue<Estimate> heap(std::less<Estimate>{}, std::move(storage));
    while (total_err > abs_tol) {
        if (heap.size() >= max_intervals) {
            throw QuadratureError("quadrature did not converge: error estimate " +
                                  std::to_string(total_err) + " exceeds tolerance " +
                                  std::to_string(abs_tol) + " after " +
                                  std::to_string(heap.size()) + " intervals");
        }
        const Estimate worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            throw QuadratureError("quadrature interval collapsed to machine precision");
        }
        const Estimate left = gauss_kronrod_15(f, worst.a, mid);
        const Estimate right = gauss_kronrod_15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum from the final partition to shed the drift of incremental updates.
    total = 0.0;
    total_err = 0.0;
    out.intervals = heap.size();
    while (!heap.empty()) {
        total += heap.top().value;
        total_err += heap.top().error;
        heap.pop();
    }
    out.value = total;
    out.error = total_err;
    return out;
}

} // namespace dephase::quad
