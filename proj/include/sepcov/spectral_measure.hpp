#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace sepcov {

using cplx = std::complex<double>;

struct Atom {
    double value = 0.0;
    double weight = 0.0;
};

// Finitely supported probability measure on the real line. Construction
// sorts atoms by location, merges duplicates, and normalizes the weights,
// so two measures built from permuted input compare equal.
class SpectralMeasure {
public:
    static constexpr double merge_tol = 1e-12;

    explicit SpectralMeasure(std::vector<Atom> atoms, std::string label = "")
        : label_(std::move(label)) {
        if (atoms.empty())
            throw EmptyList("spectral measure needs at least one atom");
        for (const Atom& a : atoms) {
            if (!std::isfinite(a.value) || !std::isfinite(a.weight))
                throw DomainViolation("spectral measure atom is not finite");
            if (a.weight <= 0.0)
                throw DomainViolation("spectral measure weights must be positive");
        }
        std::sort(atoms.begin(), atoms.end(),
                  [](const Atom& a, const Atom& b) { return a.value < b.value; });
        double total = 0.0;
        for (const Atom& a : atoms) {
            if (!atoms_.empty() && a.value - atoms_.back().value <= merge_tol) {
                // merge: weight-averaged location keeps the merged atom where
                // the mass actually sits; exact duplicates skip the average
                // so repeated eigenvalues stay bitwise intact
                Atom& last = atoms_.back();
                double w = last.weight + a.weight;
                if (a.value != last.value)
                    last.value =
                        (last.value * last.weight + a.value * a.weight) / w;
                last.weight = w;
            } else {
                atoms_.push_back(a);
            }
            total += a.weight;
        }
        for (Atom& a : atoms_) a.weight /= total;
    }

    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::string& label() const { return label_; }

    double min_value() const { return atoms_.front().value; }
    double max_value() const { return atoms_.back().value; }
    bool nonnegative() const { return min_value() >= 0.0; }

    bool operator==(const SpectralMeasure& o) const {
        if (atoms_.size() != o.atoms_.size()) return false;
        for (std::size_t i = 0; i < atoms_.size(); ++i)
            if (atoms_[i].value != o.atoms_[i].value ||
                atoms_[i].weight != o.atoms_[i].weight)
                return false;
        return true;
    }

private:
    std::vector<Atom> atoms_;
    std::string label_;
};

// Point mass at v.
inline SpectralMeasure point_mass(double v, std::string label = "") {
    return SpectralMeasure({{v, 1.0}}, std::move(label));
}

// Empirical spectral distribution: one atom per eigenvalue, equal weights
// (coincident eigenvalues merge and their weights add up).
inline SpectralMeasure from_eigenvalues(std::span<const double> values,
                                        std::string label = "") {
    if (values.empty())
        throw EmptyList("from_eigenvalues: empty eigenvalue list");
    std::vector<Atom> atoms;
    atoms.reserve(values.size());
    const double w = 1.0 / static_cast<double>(values.size());
    for (double v : values) atoms.push_back({v, w});
    return SpectralMeasure(std::move(atoms), std::move(label));
}

// Integrate a kernel against the measure. The kernel may return double or
// std::complex<double>; the result is promoted to complex either way. A
// non-finite kernel value at any atom aborts the integral.
template <class Kernel>
cplx integrate(const SpectralMeasure& mu, Kernel&& k) {
    cplx acc(0.0, 0.0);
    for (const Atom& a : mu.atoms()) {
        cplx v = cplx(k(a.value));
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw NonFiniteKernel("kernel not finite at atom "
                                  + std::to_string(a.value));
        acc += a.weight * v;
    }
    return acc;
}

inline double moment(const SpectralMeasure& mu, int k) {
    double acc = 0.0;
    for (const Atom& a : mu.atoms()) acc += a.weight * std::pow(a.value, k);
    return acc;
}

} // namespace sepcov
