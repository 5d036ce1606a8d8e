#include "rsanet/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rsanet/data_io.hpp"
#include "rsanet/model.hpp"

namespace rsanet {

namespace {

constexpr double kSymmetryTol = 1e-6;
constexpr double kDiagonalTol = 1e-9;

}  // namespace

Rdm::Rdm(Eigen::MatrixXd m) : d_(std::move(m)) {
    const auto n = d_.rows();
    if (n != d_.cols() || n < 2) {
        throw ValueError("RDM must be square with n >= 2, got " + std::to_string(n) + "x" +
                         std::to_string(d_.cols()));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double v = d_(i, j);
            if (!std::isfinite(v)) throw ValueError("RDM entries must be finite");
            if (v < 0.0) throw ValueError("RDM entries must be non-negative");
        }
        if (std::abs(d_(i, i)) > kDiagonalTol) {
            throw ValueError("RDM diagonal entry " + std::to_string(d_(i, i)) + " exceeds tolerance");
        }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (std::abs(d_(i, j) - d_(j, i)) > kSymmetryTol) {
                throw ValueError("RDM asymmetry at (" + std::to_string(i) + "," + std::to_string(j) +
                                 ") exceeds 1e-6");
            }
    // store exactly symmetric with exact zero diagonal
    for (Eigen::Index i = 0; i < n; ++i) {
        d_(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = 0.5 * (d_(i, j) + d_(j, i));
            d_(i, j) = v;
            d_(j, i) = v;
        }
    }
}

Rdm Rdm::from_upper(int n, const Eigen::VectorXd& upper) {
    if (n < 2 || upper.size() != static_cast<Eigen::Index>(n) * (n - 1) / 2) {
        throw ValueError("upper triangle length does not match n");
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    Eigen::Index k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k) {
            m(i, j) = upper[k];
            m(j, i) = upper[k];
        }
    return Rdm(std::move(m));
}

Eigen::VectorXd upper_triangle(const Rdm& rdm) {
    const int n = rdm.size();
    Eigen::VectorXd v(static_cast<Eigen::Index>(n) * (n - 1) / 2);
    Eigen::Index k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k) v[k] = rdm(i, j);
    return v;
}

Rdm normalize_rdm(const Rdm& rdm) {
    const int n = rdm.size();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            lo = std::min(lo, rdm(i, j));
            hi = std::max(hi, rdm(i, j));
        }
    if (!(hi > lo)) throw ValueError("degenerate RDM: all off-diagonal entries equal");
    const double range = hi - lo;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) out(i, j) = (rdm(i, j) - lo) / range;
    return Rdm(std::move(out));
}

Rdm group_average(const std::vector<Rdm>& rdms) {
    if (rdms.empty()) throw ValueError("group_average over an empty list");
    const int n = rdms.front().size();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
    for (const auto& r : rdms) {
        if (r.size() != n) throw ValueError("group_average: RDM sizes differ");
        sum += r.matrix();
    }
    return Rdm(sum / static_cast<double>(rdms.size()));
}

namespace {

// average (fractional) ranks, 1-based
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
    Eigen::VectorXd r(n);
    Eigen::Index s = 0;
    while (s < n) {
        Eigen::Index e = s;
        while (e + 1 < n && v[idx[static_cast<size_t>(e + 1)]] == v[idx[static_cast<size_t>(s)]]) ++e;
        const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
        for (Eigen::Index t = s; t <= e; ++t) r[idx[static_cast<size_t>(t)]] = avg;
        s = e + 1;
    }
    return r;
}

}  // namespace

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ValueError("spearman: length mismatch");
    if (a.size() < 2) throw ValueError("spearman needs at least 2 entries");
    const Eigen::VectorXd ra = average_ranks(a);
    const Eigen::VectorXd rb = average_ranks(b);
    const Eigen::VectorXd ca = ra.array() - ra.mean();
    const Eigen::VectorXd cb = rb.array() - rb.mean();
    const double va = ca.squaredNorm();
    const double vb = cb.squaredNorm();
    if (va <= 0.0 || vb <= 0.0) throw ValueError("spearman undefined: zero rank variance");
    const double r = ca.dot(cb) / std::sqrt(va * vb);
    return std::clamp(r, -1.0, 1.0);
}

double spearman(const Rdm& a, const Rdm& b) {
    if (a.size() != b.size()) throw ValueError("spearman: RDM sizes differ");
    return spearman(upper_triangle(a), upper_triangle(b));
}

double noise_ceiling_lower(const std::vector<Rdm>& subject_rdms) {
    const size_t k = subject_rdms.size();
    if (k < 2) throw ValueError("noise ceiling needs at least 2 subjects");
    const int n = subject_rdms.front().size();
    for (const auto& r : subject_rdms)
        if (r.size() != n) throw ValueError("noise ceiling: RDM sizes differ");
    double acc = 0.0;
    for (size_t s = 0; s < k; ++s) {
        Eigen::MatrixXd mean_others = Eigen::MatrixXd::Zero(n, n);
        for (size_t t = 0; t < k; ++t)
            if (t != s) mean_others += subject_rdms[t].matrix();
        mean_others /= static_cast<double>(k - 1);
        acc += spearman(subject_rdms[s], Rdm(std::move(mean_others)));
    }
    return acc / static_cast<double>(k);
}

double explained_variance(double r, double ceiling) {
    if (!(ceiling > 0.0)) throw ValueError("explained variance requires a positive noise ceiling");
    const double ratio = r / ceiling;
    return 100.0 * ratio * ratio;
}

BaselineFit baseline_fit(const std::vector<Rdm>& layer_rdms, const Rdm& target) {
    if (layer_rdms.empty()) throw ValueError("baseline_fit needs at least one layer RDM");
    const int n = target.size();
    for (const auto& layer : layer_rdms)
        if (layer.size() != n) throw ValueError("baseline_fit: layer RDM size differs from target");
    const Eigen::Index m = static_cast<Eigen::Index>(n) * (n - 1) / 2;
    const Eigen::Index k = static_cast<Eigen::Index>(layer_rdms.size());

    Eigen::MatrixXd design(m, k + 1);
    design.col(0).setOnes();
    for (Eigen::Index c = 0; c < k; ++c) design.col(c + 1) = upper_triangle(layer_rdms[static_cast<size_t>(c)]);
    const Eigen::VectorXd y = upper_triangle(target);

    Eigen::MatrixXd normal = design.transpose() * design;
    normal.diagonal().array() += 1e-8;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success) throw NumericError("baseline_fit: normal equations not solvable");
    const Eigen::VectorXd w = ldlt.solve(design.transpose() * y);
    if (!w.allFinite()) throw NumericError("baseline_fit: singular system even after damping");

    const Eigen::VectorXd fitted_tri = (design * w).cwiseMax(0.0);
    BaselineFit fit{w, Rdm::from_upper(n, fitted_tri), 0.0};
    fit.spearman_r = spearman(fit.fitted, target);
    return fit;
}

Rdm predict_rdm(const Model& model, const std::vector<Tensor>& images) {
    const int n = static_cast<int>(images.size());
    if (n < 2) throw ValueError("predict_rdm needs at least 2 images");
    const std::vector<int> img_shape = {model.spec.input_c, model.spec.input_h, model.spec.input_w};
    for (const auto& img : images)
        if (img.shape != img_shape) {
            throw ShapeError("predict_rdm: image shape " + shape_str(img.shape) + " does not match model input " +
                             shape_str(img_shape));
        }

    const auto ordered = make_pairs(n, /*both_orders=*/true);
    const size_t chunk = 128;
    std::vector<float> preds;
    preds.reserve(ordered.size());
    const size_t img_elems = images.front().data.size();
    for (size_t start = 0; start < ordered.size(); start += chunk) {
        const size_t count = std::min(chunk, ordered.size() - start);
        Tensor a({static_cast<int>(count), img_shape[0], img_shape[1], img_shape[2]});
        Tensor b(a.shape);
        for (size_t p = 0; p < count; ++p) {
            const auto [i, j] = ordered[start + p];
            std::copy(images[static_cast<size_t>(i)].data.begin(), images[static_cast<size_t>(i)].data.end(),
                      a.data.begin() + static_cast<std::ptrdiff_t>(p * img_elems));
            std::copy(images[static_cast<size_t>(j)].data.begin(), images[static_cast<size_t>(j)].data.end(),
                      b.data.begin() + static_cast<std::ptrdiff_t>(p * img_elems));
        }
        const auto scores = predict_pair_batch(model, a, b);
        preds.insert(preds.end(), scores.begin(), scores.end());
    }

    const Eigen::Index half = static_cast<Eigen::Index>(ordered.size() / 2);
    Eigen::VectorXd tri(half);
    for (Eigen::Index p = 0; p < half; ++p) {
        const double fwd = static_cast<double>(preds[static_cast<size_t>(p)]);
        const double rev = static_cast<double>(preds[static_cast<size_t>(p + half)]);
        tri[p] = std::max(0.0, 0.5 * (fwd + rev));
    }
    return Rdm::from_upper(n, tri);
}

std::string eval_report_csv(const std::vector<EvalReport>& reports) {
    std::string out = "target,spearman_r,noise_ceiling_lower,explained_variance_pct\n";
    char buf[64];
    const auto cell = [&buf](double v) -> std::string {
        if (std::isnan(v)) return "";
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return buf;
    };
    for (const auto& r : reports) {
        out += r.target_name + "," + cell(r.spearman_r) + "," + cell(r.noise_ceiling_lower) + "," +
               cell(r.explained_variance_pct) + "\n";
    }
    return out;
}

}  // namespace rsanet
