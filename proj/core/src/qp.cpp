#include "orbitguard/qp.hpp"

#include "orbitguard/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orbitguard {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DualResult {
    Eigen::VectorXd y;
    bool feasible = false;
    std::vector<int> active;
    int iterations = 0;
};

// Null-space direction z and multiplier change r for adding constraint c to the active set
// whose normals are the columns of N.
void step_directions(const Eigen::MatrixXd& N, const Eigen::VectorXd& c, Eigen::VectorXd& z, Eigen::VectorXd& r) {
    const Eigen::Index q = N.cols();
    if (q == 0) {
        z = c;
        r.resize(0);
        return;
    }
    const Eigen::Index n = N.rows();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(N);
    const Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::VectorXd qc = Q.transpose() * c;
    z = Q.rightCols(n - q) * qc.tail(n - q);
    r = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(qc.head(q));
}

Eigen::MatrixXd active_normals(const Eigen::MatrixXd& C, const std::vector<int>& active) {
    Eigen::MatrixXd N(C.cols(), static_cast<Eigen::Index>(active.size()));
    for (std::size_t i = 0; i < active.size(); ++i) N.col(static_cast<Eigen::Index>(i)) = C.row(active[i]).transpose();
    return N;
}

// Try to start from the equality-constrained minimizer on a previous active set. Accepted only
// when the normals are independent and every multiplier is non-negative, which is exactly the
// starting condition of the dual method.
bool warm_pair(const Eigen::VectorXd& y0, const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
               const std::vector<int>& warm, Eigen::VectorXd& y, std::vector<int>& active,
               std::vector<double>& lambda) {
    const auto m = static_cast<int>(C.rows());
    std::vector<int> set;
    for (int j : warm)
        if (j >= 0 && j < m) set.push_back(j);
    if (set.empty() || static_cast<Eigen::Index>(set.size()) > C.cols()) return false;
    const Eigen::MatrixXd N = active_normals(C, set);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(N);
    const auto q = static_cast<Eigen::Index>(set.size());
    const auto R = qr.matrixQR().topLeftCorner(q, q);
    for (Eigen::Index i = 0; i < q; ++i)
        if (std::abs(R(i, i)) < 1e-10 * std::max(1.0, N.col(i).norm())) return false;
    Eigen::VectorXd rhs(q);
    for (Eigen::Index i = 0; i < q; ++i) rhs(i) = d(set[static_cast<std::size_t>(i)]) - N.col(i).dot(y0);
    const Eigen::VectorXd tmp = R.transpose().triangularView<Eigen::Lower>().solve(rhs);
    const Eigen::VectorXd lam = R.triangularView<Eigen::Upper>().solve(tmp);
    if ((lam.array() < 0.0).any() || !lam.allFinite()) return false;
    y = y0 + N * lam;
    active = set;
    lambda.assign(lam.data(), lam.data() + q);
    return true;
}

// Goldfarb-Idnani dual active-set method for min 0.5|y - y0|^2 s.t. C y >= d. Starts at the
// unconstrained minimizer, adds the most violated constraint (lowest index on ties) and keeps
// dual feasibility at every step, so an empty feasible set is detected constructively.
DualResult dual_active_set(const Eigen::VectorXd& y0, const Eigen::MatrixXd& C, const Eigen::VectorXd& d,
                           const std::vector<int>& warm, int max_iterations) {
    const auto m = static_cast<int>(C.rows());
    DualResult out;
    Eigen::VectorXd y = y0;
    std::vector<int> active;
    std::vector<double> lambda;
    if (!warm.empty()) warm_pair(y0, C, d, warm, y, active, lambda);
    std::vector<char> is_active(static_cast<std::size_t>(m), 0);
    for (int j : active) is_active[static_cast<std::size_t>(j)] = 1;

    Eigen::VectorXd z;
    Eigen::VectorXd r;
    int steps = 0;
    for (;;) {
        int p = -1;
        double worst = -kQpFeasibilityTol;
        for (int j = 0; j < m; ++j) {
            if (is_active[static_cast<std::size_t>(j)]) continue;
            const double s = C.row(j).dot(y) - d(j);
            if (s < worst) {
                worst = s;
                p = j;
            }
        }
        if (p < 0) break;

        const Eigen::VectorXd cp = C.row(p).transpose();
        const double cc = cp.squaredNorm();
        double lam_p = 0.0;
        for (;;) {
            if (++steps > max_iterations) throw SolverStallError("QP iteration cap reached");
            step_directions(active_normals(C, active), cp, z, r);

            double t1 = kInf;
            int k = -1;
            const double rscale = r.size() ? std::max(1.0, r.lpNorm<Eigen::Infinity>()) : 1.0;
            for (std::size_t i = 0; i < active.size(); ++i) {
                const double ri = r(static_cast<Eigen::Index>(i));
                if (ri <= 1e-12 * rscale) continue;
                const double ratio = lambda[i] / ri;
                if (ratio < t1 || (ratio == t1 && active[i] < active[static_cast<std::size_t>(k)])) {
                    t1 = ratio;
                    k = static_cast<int>(i);
                }
            }
            const double zz = z.squaredNorm();
            const double t2 = zz > 1e-20 * cc ? (d(p) - cp.dot(y)) / zz : kInf;

            if (t1 == kInf && t2 == kInf) {
                out.y = y;
                out.feasible = false;
                out.active = active;
                out.iterations = steps;
                return out;
            }
            const double t = std::min(t1, t2);
            if (t2 < kInf) y += t * z;
            for (std::size_t i = 0; i < active.size(); ++i) lambda[i] -= t * r(static_cast<Eigen::Index>(i));
            lam_p += t;

            if (t2 <= t1) {
                active.push_back(p);
                lambda.push_back(lam_p);
                is_active[static_cast<std::size_t>(p)] = 1;
                break;
            }
            is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(k)])] = 0;
            active.erase(active.begin() + k);
            lambda.erase(lambda.begin() + k);
        }
    }
    out.y = y;
    out.feasible = true;
    out.active = active;
    out.iterations = steps;
    return out;
}

// Stack problem rows and finite box faces into C y >= d over the first k variables.
void stack_constraints(const QpProblem& p, int total_vars, Eigen::MatrixXd& C, Eigen::VectorXd& d) {
    const int k = p.dim();
    const auto m = static_cast<int>(p.rows.size());
    int box = 0;
    for (int i = 0; i < k; ++i) {
        if (std::isfinite(p.lower(i))) ++box;
        if (std::isfinite(p.upper(i))) ++box;
    }
    C.setZero(m + box, total_vars);
    d.resize(m + box);
    for (int j = 0; j < m; ++j) {
        C.row(j).head(k) = p.rows[static_cast<std::size_t>(j)].a.transpose();
        d(j) = p.rows[static_cast<std::size_t>(j)].b;
    }
    int row = m;
    for (int i = 0; i < k; ++i) {
        if (std::isfinite(p.lower(i))) {
            C(row, i) = 1.0;
            d(row++) = p.lower(i);
        }
        if (std::isfinite(p.upper(i))) {
            C(row, i) = -1.0;
            d(row++) = -p.upper(i);
        }
    }
}

std::vector<int> problem_rows(const std::vector<int>& active, int m) {
    std::vector<int> out;
    for (int j : active)
        if (j < m) out.push_back(j);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::string_view status_name(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "Optimal";
        case QpStatus::RelaxedOptimal: return "RelaxedOptimal";
        case QpStatus::Infeasible: return "Infeasible";
    }
    return "Infeasible";
}

void QpProblem::validate() const {
    const auto k = u_des.size();
    if (k < 1) throw ConfigError("QP needs at least one variable");
    if (lower.size() != k || upper.size() != k) throw ConfigError("QP box dimension mismatch");
    if (!u_des.allFinite()) throw ConfigError("QP desired point must be finite");
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i))
            throw ConfigError("QP box must satisfy lower <= upper");
    }
    for (const auto& row : rows) {
        if (row.a.size() != k) throw ConfigError("QP row dimension mismatch");
        if (!row.a.allFinite() || !std::isfinite(row.b)) throw ConfigError("QP row coefficients must be finite");
    }
}

QpSolution QpSolver::solve(const QpProblem& p) {
    p.validate();
    const int k = p.dim();
    const auto m = static_cast<int>(p.rows.size());
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
    stack_constraints(p, k, C, d);

    const DualResult r =
        dual_active_set(p.u_des, C, d, warm_start_ ? previous_ : std::vector<int>{}, 100 * std::max(k, 1) + 2 * static_cast<int>(C.rows()));
    QpSolution sol;
    sol.u = r.y;
    sol.iterations = r.iterations;
    sol.slacks.assign(static_cast<std::size_t>(m), 0.0);
    sol.active_set = problem_rows(r.active, m);
    if (!r.feasible) {
        sol.status = QpStatus::Infeasible;
        sol.objective = kInf;
        previous_.clear();
        return sol;
    }
    sol.status = QpStatus::Optimal;
    sol.objective = (sol.u - p.u_des).squaredNorm();
    previous_ = r.active;
    return sol;
}

QpSolution QpSolver::solve_relaxed(const QpProblem& p, std::span<const double> weights, std::span<const bool> hard) {
    p.validate();
    const auto m = static_cast<int>(p.rows.size());
    if (static_cast<int>(weights.size()) != m || static_cast<int>(hard.size()) != m)
        throw ConfigError("relaxation needs one weight and one hard flag per row");
    for (int j = 0; j < m; ++j)
        if (!hard[static_cast<std::size_t>(j)] && !(weights[static_cast<std::size_t>(j)] > 0.0))
            throw ConfigError("relaxation weights must be positive");

    QpSolution exact = solve(p);
    if (exact.status == QpStatus::Optimal) return exact;

    // Scaled slack variables sigma_i = sqrt(w_i) s_i turn the weighted penalty into a plain
    // distance, so the same projection solver applies.
    const int k = p.dim();
    std::vector<int> slot(static_cast<std::size_t>(m), -1);
    int soft = 0;
    for (int j = 0; j < m; ++j)
        if (!hard[static_cast<std::size_t>(j)]) slot[static_cast<std::size_t>(j)] = k + soft++;
    const int n = k + soft;

    Eigen::MatrixXd C;
    Eigen::VectorXd d;
    stack_constraints(p, n, C, d);
    for (int j = 0; j < m; ++j) {
        const int s = slot[static_cast<std::size_t>(j)];
        if (s >= 0) C(j, s) = 1.0 / std::sqrt(weights[static_cast<std::size_t>(j)]);
    }
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(n);
    y0.head(k) = p.u_des;

    const DualResult r = dual_active_set(y0, C, d, {}, 100 * n + 2 * static_cast<int>(C.rows()));
    QpSolution sol;
    sol.u = r.y.head(k);
    sol.iterations = exact.iterations + r.iterations;
    sol.slacks.assign(static_cast<std::size_t>(m), 0.0);
    sol.active_set = problem_rows(r.active, m);
    if (!r.feasible) {
        sol.status = QpStatus::Infeasible;
        sol.objective = kInf;
        return sol;
    }
    sol.status = QpStatus::RelaxedOptimal;
    double penalty = 0.0;
    for (int j = 0; j < m; ++j) {
        const int s = slot[static_cast<std::size_t>(j)];
        if (s < 0) continue;
        const double w = weights[static_cast<std::size_t>(j)];
        const double slack = std::max(0.0, r.y(s) / std::sqrt(w));
        sol.slacks[static_cast<std::size_t>(j)] = slack;
        penalty += w * slack * slack;
    }
    sol.objective = (sol.u - p.u_des).squaredNorm() + penalty;
    return sol;
}

QpSolution solve_qp(const QpProblem& p) {
    QpSolver s(false);
    return s.solve(p);
}

QpSolution solve_qp_relaxed(const QpProblem& p, std::span<const double> weights, std::span<const bool> hard) {
    QpSolver s(false);
    return s.solve_relaxed(p, weights, hard);
}

}  // namespace orbitguard
