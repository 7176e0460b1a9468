#ifndef KAN_STANDARDIZE_HPP
#define KAN_STANDARDIZE_HPP

#include <span>
#include <vector>

namespace kan {

// Per-feature affine standardization followed by a tanh squash:
//   u = tanh(((x - mean) / stddev) / squash_scale)
// which lands every input in (-1, 1), the spline grid's home interval.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;
    double squash_scale = 3.0;

    std::size_t feature_count() const { return mean.size(); }

    double transform_one(std::size_t feature, double x) const;
    double inverse_one(std::size_t feature, double u) const;

    void transform(std::span<const double> x, std::span<double> out) const;
    std::vector<double> transform(std::span<const double> x) const;
};

// Fits mean/stddev per feature column (population standard deviation).
// Throws std::invalid_argument for fewer than 2 rows and
// DegenerateFeatureError when a column is constant.
Standardizer fit_standardizer(std::span<const std::vector<double>> rows);

} // namespace kan

#endif
