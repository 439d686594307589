#pragma once

#include <array>
#include <vector>

#include "ablate/rng.hpp"

namespace ablate {

using Point = std::array<double, 2>;

// 2x2 row-major matrix helpers for covariance algebra.
using Mat2 = std::array<double, 4>;

Mat2 mat2_mul(const Mat2& a, const Mat2& b);
Mat2 mat2_transpose(const Mat2& a);
Mat2 rotation2(double angle);
double mat2_det(const Mat2& a);
Mat2 mat2_inverse(const Mat2& a);

struct Gauss2 {
    Point mean{0.0, 0.0};
    Mat2 cov{1.0, 0.0, 0.0, 1.0};

    static Gauss2 isotropic(Point mean, double sigma);

    double logpdf(const Point& x) const;
    Point sample(RngStream& rng) const;

    // Transformed variable A x for x ~ this.
    Gauss2 linear_map(const Mat2& a) const;

    // KL(this || other), closed form.
    static double kl(const Gauss2& p, const Gauss2& q);
};

struct Mixture2 {
    std::vector<double> weights;
    std::vector<Gauss2> comps;

    double logpdf(const Point& x) const;
    Point sample(RngStream& rng) const;
    Mixture2 linear_map(const Mat2& a) const;
    void validate() const;  // weights sum to 1 +- 1e-12, covariances SPD

    Point mean() const;
};

}  // namespace ablate
