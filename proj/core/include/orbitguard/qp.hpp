#pragma once

#include <Eigen/Dense>

#include <span>
#include <string_view>
#include <vector>

namespace orbitguard {

/// One linear inequality a . u >= b.
struct QpRow {
    Eigen::VectorXd a;
    double b = 0.0;
};

/// minimize |u - u_des|^2 subject to rows and lower <= u <= upper.
struct QpProblem {
    Eigen::VectorXd u_des;
    std::vector<QpRow> rows;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int dim() const { return static_cast<int>(u_des.size()); }
    /// Throws ConfigError if dimensions disagree, the box is inverted or entries are not finite.
    void validate() const;
};

enum class QpStatus { Optimal, RelaxedOptimal, Infeasible };
std::string_view status_name(QpStatus s);

struct QpSolution {
    Eigen::VectorXd u;
    QpStatus status = QpStatus::Infeasible;
    std::vector<int> active_set;  // indices into QpProblem::rows, ascending
    std::vector<double> slacks;   // one per row
    int iterations = 0;
    double objective = 0.0;       // |u - u_des|^2 (+ weighted slack penalty when relaxed)
};

inline constexpr double kQpFeasibilityTol = 1e-9;

/// Dense dual active-set solver for the projection QP. Holds only the previous cycle's active
/// set for warm starts; one instance per filter.
class QpSolver {
  public:
    explicit QpSolver(bool warm_start = true) : warm_start_(warm_start) {}

    QpSolution solve(const QpProblem& p);

    /// Rows relaxed to a . u >= b - s_i with penalty w_i s_i^2; hard rows keep s_i = 0. An
    /// already-feasible problem is returned exactly as solve() would.
    QpSolution solve_relaxed(const QpProblem& p, std::span<const double> weights, std::span<const bool> hard);

    void reset() { previous_.clear(); }

  private:
    bool warm_start_;
    std::vector<int> previous_;  // active constraints of the last exact solve, combined numbering
};

/// Stateless cold solves.
QpSolution solve_qp(const QpProblem& p);
QpSolution solve_qp_relaxed(const QpProblem& p, std::span<const double> weights, std::span<const bool> hard);

}  // namespace orbitguard
