#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "rsanet/tensor.hpp"

namespace rsanet {

struct Model;

// Representational dissimilarity matrix: n x n (n >= 2), finite, non-negative,
// zero diagonal. Construction validates symmetry to 1e-6 and then stores the
// exactly symmetrized matrix, so downstream arithmetic never re-checks.
class Rdm {
public:
    explicit Rdm(Eigen::MatrixXd m);

    int size() const { return static_cast<int>(d_.rows()); }
    const Eigen::MatrixXd& matrix() const { return d_; }
    double operator()(int i, int j) const { return d_(i, j); }

    // Mirrors an upper triangle (canonical i<j row-major order) into a full
    // matrix with zero diagonal.
    static Rdm from_upper(int n, const Eigen::VectorXd& upper);

private:
    Eigen::MatrixXd d_;
};

// Canonical i<j row-major flattening, length n(n-1)/2.
Eigen::VectorXd upper_triangle(const Rdm& rdm);

// Min-max maps the off-diagonal entries onto [0,1]; throws on a constant
// off-diagonal (degenerate RDM).
Rdm normalize_rdm(const Rdm& rdm);

// Elementwise mean across subjects.
Rdm group_average(const std::vector<Rdm>& rdms);

// Pearson correlation of average-rank-transformed vectors (ties receive
// fractional ranks). Throws when either rank vector has zero variance.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double spearman(const Rdm& a, const Rdm& b);

// Leave-one-subject-out lower bound: mean over subjects of
// spearman(subject, mean of the others).
double noise_ceiling_lower(const std::vector<Rdm>& subject_rdms);

// 100 * (r / ceiling)^2; requires ceiling > 0.
double explained_variance(double r, double ceiling);

struct BaselineFit {
    Eigen::VectorXd weights;  // [intercept, w_1 .. w_k]
    Rdm fitted;
    double spearman_r;
};

// Least-squares combination of layer RDM upper triangles (plus intercept)
// against the target, solved by ridge-damped normal equations (lambda 1e-8).
// The fitted triangle is clamped at 0 before reassembly.
BaselineFit baseline_fit(const std::vector<Rdm>& layer_rdms, const Rdm& target);

// Model-predicted RDM over an image set: d[i][j] = d[j][i] =
// max(0, (f(i,j) + f(j,i)) / 2), zero diagonal.
Rdm predict_rdm(const Model& model, const std::vector<Tensor>& images);

struct EvalReport {
    std::string target_name;
    double spearman_r = std::numeric_limits<double>::quiet_NaN();
    double noise_ceiling_lower = std::numeric_limits<double>::quiet_NaN();
    double explained_variance_pct = std::numeric_limits<double>::quiet_NaN();
};

// CSV with header target,spearman_r,noise_ceiling_lower,explained_variance_pct;
// 6 decimal places, NaN fields left empty.
std::string eval_report_csv(const std::vector<EvalReport>& reports);

}  // namespace rsanet
