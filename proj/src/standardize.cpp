#include "kan/standardize.hpp"

#include "kan/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kan {

double Standardizer::transform_one(std::size_t feature, double x) const {
    double z = (x - mean[feature]) / stddev[feature];
    return std::tanh(z / squash_scale);
}

double Standardizer::inverse_one(std::size_t feature, double u) const {
    double z = std::atanh(u) * squash_scale;
    return mean[feature] + stddev[feature] * z;
}

void Standardizer::transform(std::span<const double> x, std::span<double> out) const {
    if (x.size() != mean.size() || out.size() != mean.size())
        throw DimensionMismatchError("Standardizer: feature count mismatch");
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = transform_one(j, x[j]);
}

std::vector<double> Standardizer::transform(std::span<const double> x) const {
    std::vector<double> out(mean.size());
    transform(x, out);
    return out;
}

Standardizer fit_standardizer(std::span<const std::vector<double>> rows) {
    if (rows.size() < 2)
        throw std::invalid_argument("fit_standardizer: need at least 2 rows");
    const std::size_t n_features = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != n_features)
            throw DimensionMismatchError("fit_standardizer: ragged rows");
    }

    Standardizer s;
    s.mean.assign(n_features, 0.0);
    s.stddev.assign(n_features, 0.0);
    const double n = static_cast<double>(rows.size());

    for (const auto& r : rows) {
        for (std::size_t j = 0; j < n_features; ++j) s.mean[j] += r[j];
    }
    for (std::size_t j = 0; j < n_features; ++j) s.mean[j] /= n;

    for (const auto& r : rows) {
        for (std::size_t j = 0; j < n_features; ++j) {
            double d = r[j] - s.mean[j];
            s.stddev[j] += d * d;
        }
    }
    constexpr double kMinStd = 1e-12;
    for (std::size_t j = 0; j < n_features; ++j) {
        s.stddev[j] = std::sqrt(s.stddev[j] / n);
        if (!(s.stddev[j] > kMinStd))
            throw DegenerateFeatureError("fit_standardizer: feature " + std::to_string(j) +
                                         " is constant");
    }
    return s;
}

} // namespace kan
