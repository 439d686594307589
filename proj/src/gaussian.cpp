#include "ablate/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace ablate {

Mat2 mat2_mul(const Mat2& a, const Mat2& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

Mat2 mat2_transpose(const Mat2& a) { return {a[0], a[2], a[1], a[3]}; }

Mat2 rotation2(double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return {c, -s, s, c};
}

double mat2_det(const Mat2& a) { return a[0] * a[3] - a[1] * a[2]; }

Mat2 mat2_inverse(const Mat2& a) {
    double det = mat2_det(a);
    if (det == 0.0) throw std::runtime_error("mat2_inverse: singular matrix");
    double inv = 1.0 / det;
    return {a[3] * inv, -a[1] * inv, -a[2] * inv, a[0] * inv};
}

Gauss2 Gauss2::isotropic(Point mean, double sigma) {
    return Gauss2{mean, {sigma * sigma, 0.0, 0.0, sigma * sigma}};
}

double Gauss2::logpdf(const Point& x) const {
    double det = mat2_det(cov);
    if (det <= 0.0) throw std::runtime_error("Gauss2::logpdf: covariance not positive definite");
    Mat2 prec = mat2_inverse(cov);
    double dx = x[0] - mean[0], dy = x[1] - mean[1];
    double q = dx * (prec[0] * dx + prec[1] * dy) + dy * (prec[2] * dx + prec[3] * dy);
    return -0.5 * q - 0.5 * std::log(det) - std::log(2.0 * M_PI);
}

Point Gauss2::sample(RngStream& rng) const {
    // Cholesky of [[a,b],[b,c]]: L = [[sqrt(a),0],[b/sqrt(a), sqrt(c - b^2/a)]]
    double a = cov[0], b = cov[1], c = cov[3];
    if (a <= 0.0 || c - b * b / a <= 0.0)
        throw std::runtime_error("Gauss2::sample: covariance not positive definite");
    double l00 = std::sqrt(a);
    double l10 = b / l00;
    double l11 = std::sqrt(c - l10 * l10);
    double z0 = rng.normal(), z1 = rng.normal();
    return {mean[0] + l00 * z0, mean[1] + l10 * z0 + l11 * z1};
}

Gauss2 Gauss2::linear_map(const Mat2& m) const {
    Gauss2 out;
    out.mean = {m[0] * mean[0] + m[1] * mean[1], m[2] * mean[0] + m[3] * mean[1]};
    out.cov = mat2_mul(mat2_mul(m, cov), mat2_transpose(m));
    return out;
}

double Gauss2::kl(const Gauss2& p, const Gauss2& q) {
    Mat2 qinv = mat2_inverse(q.cov);
    Mat2 prod = mat2_mul(qinv, p.cov);
    double trace = prod[0] + prod[3];
    double dx = q.mean[0] - p.mean[0], dy = q.mean[1] - p.mean[1];
    double maha = dx * (qinv[0] * dx + qinv[1] * dy) + dy * (qinv[2] * dx + qinv[3] * dy);
    return 0.5 * (trace + maha - 2.0 + std::log(mat2_det(q.cov) / mat2_det(p.cov)));
}

void Mixture2::validate() const {
    if (weights.size() != comps.size() || comps.empty())
        throw std::invalid_argument("Mixture2: weights/components size mismatch");
    double s = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("Mixture2: negative weight");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("Mixture2: weights do not sum to 1");
    for (const Gauss2& g : comps) {
        if (std::abs(g.cov[1] - g.cov[2]) > 1e-12)
            throw std::invalid_argument("Mixture2: covariance not symmetric");
        if (g.cov[0] <= 0.0 || mat2_det(g.cov) <= 0.0)
            throw std::invalid_argument("Mixture2: covariance not positive definite");
    }
}

double Mixture2::logpdf(const Point& x) const {
    // log-sum-exp over components
    double best = -1e300;
    std::vector<double> terms(comps.size());
    for (size_t i = 0; i < comps.size(); ++i) {
        terms[i] = weights[i] > 0.0 ? std::log(weights[i]) + comps[i].logpdf(x) : -1e300;
        best = std::max(best, terms[i]);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
}

Point Mixture2::sample(RngStream& rng) const {
    double u = rng.uniform();
    double acc = 0.0;
    size_t pick = comps.size() - 1;
    for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    return comps[pick].sample(rng);
}

Mixture2 Mixture2::linear_map(const Mat2& a) const {
    Mixture2 out;
    out.weights = weights;
    for (const Gauss2& g : comps) out.comps.push_back(g.linear_map(a));
    return out;
}

Point Mixture2::mean() const {
    Point m{0.0, 0.0};
    for (size_t i = 0; i < comps.size(); ++i) {
        m[0] += weights[i] * comps[i].mean[0];
        m[1] += weights[i] * comps[i].mean[1];
    }
    return m;
}

}  // namespace ablate
