#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/OrderingMethods>

#include "mecache/energy.hpp"
#include "mecache/model.hpp"

namespace mecache {

// Inside the solver bits are measured in Kbit and energy in mJ. Both factors
// are exact powers of ten and are undone when results leave this module.
inline constexpr double kBitsPerUnit = 1e3;
inline constexpr double kUnitsPerJoule = 1e3;

/// Phase-II variable class pinned to zero, used by the benchmark schemes.
enum class Restriction { None, NoLocal, NoOffload };

enum class VarKind { Alpha, OffloadP1, MecP1, Local, Offload, Mec };

struct Variable {
  VarKind kind;
  int k = 0;  // WD, or -1
  int n = 0;  // slot, or task index for Alpha
};

/// Separable convex cost of one variable in solver units.
struct VarCost {
  enum class Shape { None, Linear, Cubic, Exp };
  Shape shape = Shape::None;
  double coef = 0.0;  // Linear slope, cubic coefficient, or exp amplitude
  double rate = 1.0;  // Exp only

  double value(double x) const {
    switch (shape) {
      case Shape::Linear: return coef * x;
      case Shape::Cubic: return CubicCost{coef}.value(x);
      case Shape::Exp: return ExpCost{coef, rate}.value(x);
      default: return 0.0;
    }
  }
  double derivative(double x) const {
    switch (shape) {
      case Shape::Linear: return coef;
      case Shape::Cubic: return CubicCost{coef}.derivative(x);
      case Shape::Exp: return ExpCost{coef, rate}.derivative(x);
      default: return 0.0;
    }
  }
  double second_derivative(double x) const {
    switch (shape) {
      case Shape::Cubic: return CubicCost{coef}.second_derivative(x);
      case Shape::Exp: return ExpCost{coef, rate}.second_derivative(x);
      default: return 0.0;
    }
  }
  double increment(double x, double step) const {
    switch (shape) {
      case Shape::Linear: return coef * step;
      case Shape::Cubic: return CubicCost{coef}.increment(x, step);
      case Shape::Exp: return ExpCost{coef, rate}.increment(x, step);
      default: return 0.0;
    }
  }
};

enum class RowKind {
  Capacity,         // cache capacity
  CacheUpload,      // Phase-I upload total equals cached bits
  CacheCausality,   // MEC cannot run Phase-I bits before they are uploaded
  CacheCompletion,  // all uploaded bits executed within Phase I
  WdCausality,      // WD cannot process bits before they arrive
  WdDeadline,       // every uncached arrived bit processed by slot N
  MecCausality,     // MEC cannot run offloaded bits before they arrive
  MecDeadline,      // every offloaded bit executed by slot N
};

inline const char* to_string(RowKind kind) {
  switch (kind) {
    case RowKind::Capacity: return "capacity";
    case RowKind::CacheUpload: return "cache_upload";
    case RowKind::CacheCausality: return "cache_causality";
    case RowKind::CacheCompletion: return "cache_completion";
    case RowKind::WdCausality: return "wd_causality";
    case RowKind::WdDeadline: return "wd_deadline";
    case RowKind::MecCausality: return "mec_causality";
    case RowKind::MecDeadline: return "mec_deadline";
  }
  return "?";
}

enum class Sense { LessEqual, Equal };

struct Term {
  int var;
  double coef;
};

/// sum(coef * x[var]) (<= or =) rhs, in solver units.
struct LinearRow {
  RowKind kind;
  int k = -1;
  int n = -1;
  Sense sense = Sense::LessEqual;
  std::vector<Term> terms;
  double rhs = 0.0;

  double activity(const std::vector<double>& x) const {
    double a = 0.0;
    for (const auto& t : terms) a += t.coef * x[t.var];
    return a;
  }
};

/// The convex program for one (possibly partial) cache placement: fixed
/// caching decisions are folded into constants, free ones become variables in
/// [0, 1], and structurally zero schedule entries are not variables at all.
/// Every variable has lower bound 0.
struct ConvexInstance {
  int K = 0, N = 0, Np = 0, L = 0;
  CachePlacement placement;
  Restriction restriction = Restriction::None;
  std::vector<Variable> vars;
  std::vector<VarCost> costs;
  std::vector<double> upper;  // +inf except 1 for Alpha
  std::vector<LinearRow> rows;
  std::vector<int> alpha_var;  // per task: variable index, or -1 when fixed
  /// Fixed caching decisions alone already exceed the capacity.
  bool structurally_infeasible = false;

  std::size_t num_vars() const { return vars.size(); }
  std::size_t count(RowKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        rows.begin(), rows.end(),
        [&](const LinearRow& r) { return r.kind == kind; }));
  }
  double objective(const std::vector<double>& x) const {
    double f = 0.0;
    for (std::size_t j = 0; j < costs.size(); ++j) f += costs[j].value(x[j]);
    return f;
  }
};

/// Builds P(L0, L1) for `placement`, optionally pinning one Phase-II variable
/// class to zero.
inline ConvexInstance assemble(const Scenario& s, const CachePlacement& placement,
                               Restriction restriction = Restriction::None) {
  const auto& p = s.params;
  if (placement.size() != static_cast<std::size_t>(p.L))
    throw std::invalid_argument("assemble: placement size mismatch");

  ConvexInstance inst;
  inst.K = p.K;
  inst.N = p.N;
  inst.Np = p.Np;
  inst.L = p.L;
  inst.placement = placement;
  inst.restriction = restriction;

  const double bit_scale = kBitsPerUnit;
  const double cubic_scale = kUnitsPerJoule * bit_scale * bit_scale * bit_scale;
  const auto add_var = [&](VarKind kind, int k, int n, VarCost cost,
                           double ub = std::numeric_limits<double>::infinity()) {
    inst.vars.push_back({kind, k, n});
    inst.costs.push_back(cost);
    inst.upper.push_back(ub);
    return static_cast<int>(inst.vars.size()) - 1;
  };
  const auto cubic = [&](double weight, double zeta, double C) {
    return VarCost{VarCost::Shape::Cubic,
                   weight * cpu_cost(zeta, C, p.tau).coef * cubic_scale, 1.0};
  };
  const auto expo = [&](double weight, double h2, double B) {
    const auto c = transmit_cost(h2, B, p.tau, p.sigma2);
    return VarCost{VarCost::Shape::Exp, weight * c.amplitude * kUnitsPerJoule,
                   c.rate / bit_scale};
  };

  std::vector<double> D(p.L);
  for (int l = 0; l < p.L; ++l) D[l] = s.library.D[l] / bit_scale;

  inst.alpha_var.assign(p.L, -1);
  for (int l = 0; l < p.L; ++l)
    if (placement[l] == CacheState::Free)
      inst.alpha_var[l] = add_var(VarKind::Alpha, -1, l, VarCost{}, 1.0);

  std::vector<int> off_p1(p.Np, -1), mec_p1(p.Np, -1);
  for (int i = 0; i + 1 < p.Np; ++i)
    off_p1[i] = add_var(VarKind::OffloadP1, s.k_o, i,
                        expo(p.w1, s.channels.h2_phase1[i], p.B_phase1[i]));
  for (int i = 1; i < p.Np; ++i)
    mec_p1[i] = add_var(VarKind::MecP1, -1, i, cubic(p.w0, p.zeta0, p.C0));

  Grid<int> loc(p.K, std::vector<int>(p.N, -1));
  Grid<int> off(p.K, std::vector<int>(p.N, -1));
  for (int k = 0; k < p.K; ++k) {
    for (int n = 0; n < p.N; ++n)
      if (restriction != Restriction::NoLocal)
        loc[k][n] = add_var(VarKind::Local, k, n,
                            cubic(p.w1, p.zeta_k[k], p.C_k[k]));
    for (int n = 0; n + 1 < p.N; ++n)
      if (restriction != Restriction::NoOffload)
        off[k][n] = add_var(VarKind::Offload, k, n,
                            expo(p.w1, s.channels.h2[k][n], p.B[k][n]));
  }
  std::vector<int> mec(p.N, -1);
  for (int n = 1; n < p.N; ++n)
    mec[n] = add_var(VarKind::Mec, -1, n, cubic(p.w0, p.zeta0, p.C0));

  const auto push = [](std::vector<Term>& terms, int var, double coef) {
    if (var >= 0) terms.push_back({var, coef});
  };

  // Capacity and Phase-I upload.
  double fixed_cached = 0.0;
  for (int l = 0; l < p.L; ++l)
    if (placement[l] == CacheState::One) fixed_cached += D[l];
  {
    LinearRow cap{RowKind::Capacity};
    for (int l = 0; l < p.L; ++l) push(cap.terms, inst.alpha_var[l], D[l]);
    cap.rhs = s.library.Dmax / bit_scale - fixed_cached;
    inst.rows.push_back(std::move(cap));
    inst.structurally_infeasible =
        fixed_cached > s.library.Dmax / bit_scale * (1.0 + 1e-12) + 1e-12;

    LinearRow upload{RowKind::CacheUpload};
    upload.sense = Sense::Equal;
    for (int i = 0; i < p.Np; ++i) push(upload.terms, off_p1[i], 1.0);
    for (int l = 0; l < p.L; ++l) push(upload.terms, inst.alpha_var[l], -D[l]);
    upload.rhs = fixed_cached;
    inst.rows.push_back(std::move(upload));
  }
  for (int i = 0; i < p.Np; ++i) {
    LinearRow r{RowKind::CacheCausality, -1, i};
    for (int j = 0; j <= i; ++j) push(r.terms, mec_p1[j], 1.0);
    for (int j = 0; j < i; ++j) push(r.terms, off_p1[j], -1.0);
    inst.rows.push_back(std::move(r));
  }
  {
    LinearRow r{RowKind::CacheCompletion};
    r.sense = Sense::Equal;
    for (int j = 0; j < p.Np; ++j) push(r.terms, mec_p1[j], 1.0);
    for (int j = 0; j < p.Np; ++j) push(r.terms, off_p1[j], -1.0);
    inst.rows.push_back(std::move(r));
  }

  // Phase II per WD. The CTS indicator is a constant per (k, n, l).
  const auto first = first_arrivals(s);
  for (int k = 0; k < p.K; ++k) {
    for (int n = 0; n < p.N; ++n) {
      LinearRow r{RowKind::WdCausality, k, n};
      for (int j = 0; j <= n; ++j) {
        push(r.terms, loc[k][j], 1.0);
        push(r.terms, off[k][j], 1.0);
      }
      for (int l = 0; l < p.L; ++l) {
        if (first[k][l] > n) continue;
        if (placement[l] == CacheState::Zero) r.rhs += D[l];
        if (placement[l] == CacheState::Free) {
          r.rhs += D[l];
          push(r.terms, inst.alpha_var[l], D[l]);
        }
      }
      inst.rows.push_back(r);
      if (n == p.N - 1) {
        r.kind = RowKind::WdDeadline;
        r.sense = Sense::Equal;
        inst.rows.push_back(std::move(r));
      }
    }
  }
  // Reorder so that all deadlines follow all causality rows, keeping the
  // inventory grouped by kind.
  std::stable_partition(inst.rows.begin(), inst.rows.end(),
                        [](const LinearRow& r) {
                          return r.kind != RowKind::WdDeadline;
                        });

  for (int n = 0; n + 1 < p.N; ++n) {
    LinearRow r{RowKind::MecCausality, -1, n};
    for (int j = 0; j <= n; ++j) push(r.terms, mec[j], 1.0);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < p.K; ++k) push(r.terms, off[k][j], -1.0);
    inst.rows.push_back(std::move(r));
  }
  {
    LinearRow r{RowKind::MecDeadline};
    r.sense = Sense::Equal;
    for (int j = 0; j < p.N; ++j) push(r.terms, mec[j], 1.0);
    for (int j = 0; j + 1 < p.N; ++j)
      for (int k = 0; k < p.K; ++k) push(r.terms, off[k][j], -1.0);
    inst.rows.push_back(std::move(r));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Solutions and KKT certificates
// ---------------------------------------------------------------------------

enum class SolveStatus { Optimal, Infeasible, MaxIter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "?";
}

/// Primal point plus multipliers for every row and bound of an instance.
struct KktPoint {
  std::vector<double> x;
  std::vector<double> row_duals;    // free sign on equalities, >= 0 otherwise
  std::vector<double> lower_duals;  // x >= 0
  std::vector<double> upper_duals;  // x <= upper (Alpha only)
};

struct KktBreakdown {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const {
    return std::max({stationarity, primal, dual, complementarity});
  }
};

/// Max-norm residuals of the KKT conditions at `pt`, in solver units.
/// Stationarity of variable j is divided by max(1, |df/dx_j|) and each
/// complementarity product by max(1, |multiplier|), so large energies are held
/// to a relative standard and small ones to an absolute one.
inline KktBreakdown kkt_breakdown(const ConvexInstance& inst,
                                  const KktPoint& pt) {
  const std::size_t n = inst.num_vars();
  if (pt.x.size() != n || pt.lower_duals.size() != n ||
      pt.upper_duals.size() != n || pt.row_duals.size() != inst.rows.size())
    throw std::invalid_argument("kkt_residual: dimension mismatch");

  KktBreakdown out;
  std::vector<double> grad(n), scale(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double g = inst.costs[j].derivative(std::max(pt.x[j], 0.0));
    scale[j] = std::max(1.0, std::abs(g));
    grad[j] = g - pt.lower_duals[j] + pt.upper_duals[j];
  }
  const auto comp = [](double mult, double slack) {
    return std::abs(mult * slack) / std::max(1.0, std::abs(mult));
  };
  for (std::size_t r = 0; r < inst.rows.size(); ++r) {
    const auto& row = inst.rows[r];
    const double y = pt.row_duals[r];
    for (const auto& t : row.terms) grad[t.var] += y * t.coef;
    const double slack = row.rhs - row.activity(pt.x);
    if (row.sense == Sense::Equal) {
      out.primal = std::max(out.primal, std::abs(slack));
    } else {
      out.primal = std::max(out.primal, -slack);
      out.dual = std::max(out.dual, -y);
      out.complementarity = std::max(out.complementarity, comp(y, slack));
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    out.stationarity = std::max(out.stationarity, std::abs(grad[j]) / scale[j]);
    out.primal = std::max(out.primal, -pt.x[j]);
    out.dual = std::max({out.dual, -pt.lower_duals[j], -pt.upper_duals[j]});
    out.complementarity =
        std::max(out.complementarity, comp(pt.lower_duals[j], pt.x[j]));
    if (std::isfinite(inst.upper[j])) {
      out.primal = std::max(out.primal, pt.x[j] - inst.upper[j]);
      out.complementarity =
          std::max(out.complementarity,
                   comp(pt.upper_duals[j], inst.upper[j] - pt.x[j]));
    } else {
      out.dual = std::max(out.dual, std::abs(pt.upper_duals[j]));
    }
  }
  return out;
}

inline double kkt_residual(const ConvexInstance& inst, const KktPoint& pt) {
  return kkt_breakdown(inst, pt).max();
}

struct ConvexSolution {
  SolveStatus status = SolveStatus::MaxIter;
  KktPoint point;
  double objective = std::numeric_limits<double>::infinity();  // Joules
  double kkt_residual = std::numeric_limits<double>::infinity();
  std::vector<int> certificate;  // conflicting rows when Infeasible
  std::string message;
  int newton_steps = 0;

  bool optimal() const { return status == SolveStatus::Optimal; }

  /// Caching value of task l: fixed decisions as 0/1, free ones relaxed.
  double alpha(const ConvexInstance& inst, int l) const {
    const int v = inst.alpha_var.at(l);
    if (v >= 0) return point.x.at(v);
    return inst.placement[l] == CacheState::One ? 1.0 : 0.0;
  }
  std::vector<double> alphas(const ConvexInstance& inst) const {
    std::vector<double> a(inst.L);
    for (int l = 0; l < inst.L; ++l) a[l] = alpha(inst, l);
    return a;
  }
};

struct SolverOptions {
  double tol = 1e-8;        // target KKT residual, solver units
  double mu = 10.0;         // barrier parameter growth per centering
  int max_newton = 3000;    // total Newton steps, both phases
  double center_tol = 1e-14;        // Newton decrement^2 / 2, final centerings
  double loose_center_tol = 0.5;    // same, while the duality gap is large
  double tight_gap = 1e-3;          // m / t below which centering is tight
};

/// Maps a solution back to a schedule in bits.
inline Schedule to_schedule(const ConvexInstance& inst, const KktPoint& pt) {
  SystemParams dims;
  dims.K = inst.K;
  dims.N = inst.N;
  dims.Np = inst.Np;
  Schedule s = Schedule::zeros(dims);
  for (std::size_t j = 0; j < inst.vars.size(); ++j) {
    const auto& v = inst.vars[j];
    const double bits = std::max(pt.x[j], 0.0) * kBitsPerUnit;
    switch (v.kind) {
      case VarKind::Alpha: break;
      case VarKind::OffloadP1: s.d_off_p1[v.n] = bits; break;
      case VarKind::MecP1: s.d_mec_p1[v.n] = bits; break;
      case VarKind::Local: s.d_loc[v.k][v.n] = bits; break;
      case VarKind::Offload: s.d_off[v.k][v.n] = bits; break;
      case VarKind::Mec: s.d_mec[v.n] = bits; break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Barrier engine
// ---------------------------------------------------------------------------

namespace detail {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// min sum_j cost_j(z_j)  s.t.  A z = b,  G z <= h, over z in R^n.
/// Variable bounds are ordinary rows of G.
struct BarrierProblem {
  std::vector<VarCost> costs;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  SparseRows G;
  Eigen::VectorXd h;
  /// Rows of G kept out of the sparse Hessian and eliminated through a Schur
  /// complement instead; used for rows that would couple otherwise
  /// independent blocks. Empty means none.
  std::vector<char> coupling;
};

struct BarrierResult {
  Eigen::VectorXd z;
  Eigen::VectorXd slack;
  Eigen::VectorXd ineq_duals;
  Eigen::VectorXd eq_duals;
  double t = 0.0;
  int newton_steps = 0;
  bool converged = false;
};

class BarrierSolver {
 public:
  BarrierSolver(const BarrierProblem& prob, const SolverOptions& opt)
      : prob_(prob), opt_(opt) {
    setup();
  }

  /// Path-following from a strictly feasible z. After each centering the
  /// current iterate is offered to `stop`, which ends the run by returning
  /// true. Centering is loose while m/t exceeds `tight_gap`.
  template <typename Stop>
  BarrierResult run(Eigen::VectorXd z, double t0, double gap_tol,
                    double tight_gap, int budget, Stop stop) {
    const double m = static_cast<double>(prob_.G.rows());
    // Slacks are carried alongside z and updated by the same steps; forming
    // h - G z afresh would lose the small slacks of active rows to
    // cancellation, and with them the multiplier estimates 1/(t s).
    s_ = prob_.h - prob_.G * z;
    w_ = Eigen::VectorXd::Zero(prob_.A.rows());
    int steps = 0;
    double t = t0;
    while (true) {
      const bool tight = m / t <= tight_gap;
      const bool ok = center(z, t, tight ? opt_.center_tol : opt_.loose_center_tol,
                             budget, steps);
      BarrierResult res = snapshot(z, t, steps);
      if (!ok) return res;
      if (stop(res) || m / t <= gap_tol) {
        res.converged = true;
        return res;
      }
      t *= opt_.mu;
    }
  }

 private:
  using SparseCols = Eigen::SparseMatrix<double, Eigen::ColMajor>;

  struct Contribution {
    int pos;      // index into H0_ values
    int row;      // row of G
    double coef;  // product of the two coefficients
  };

  /// Fixes the sparsity pattern of the Hessian once per problem.
  void setup() {
    const Eigen::Index n = prob_.G.cols();
    const Eigen::Index p = prob_.A.rows();
    const auto is_coupling = [&](Eigen::Index r) {
      return !prob_.coupling.empty() && prob_.coupling[r];
    };
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index j = 0; j < n; ++j) trip.emplace_back(j, j, 0.0);
    for (Eigen::Index r = 0; r < prob_.G.rows(); ++r) {
      if (is_coupling(r)) {
        coupling_rows_.push_back(r);
        continue;
      }
      for (SparseRows::InnerIterator a(prob_.G, r); a; ++a)
        for (SparseRows::InnerIterator b(prob_.G, r); b; ++b)
          if (b.col() >= a.col()) trip.emplace_back(b.col(), a.col(), 0.0);
    }
    H0_.resize(n, n);
    H0_.setFromTriplets(trip.begin(), trip.end());
    H0_.makeCompressed();
    const auto position = [&](Eigen::Index row, Eigen::Index col) {
      const int* begin = H0_.innerIndexPtr() + H0_.outerIndexPtr()[col];
      const int* end = H0_.innerIndexPtr() + H0_.outerIndexPtr()[col + 1];
      return static_cast<int>(std::lower_bound(begin, end, row) -
                              H0_.innerIndexPtr());
    };
    diag_pos_.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) diag_pos_[j] = position(j, j);
    for (Eigen::Index r = 0; r < prob_.G.rows(); ++r) {
      if (is_coupling(r)) continue;
      for (SparseRows::InnerIterator a(prob_.G, r); a; ++a)
        for (SparseRows::InnerIterator b(prob_.G, r); b; ++b)
          if (b.col() >= a.col())
            contrib_.push_back({position(b.col(), a.col()), static_cast<int>(r),
                                a.value() * b.value()});
    }
    llt_.analyzePattern(H0_);

    const Eigen::Index nc = static_cast<Eigen::Index>(coupling_rows_.size());
    C_ = Eigen::MatrixXd::Zero(n, nc + p);
    for (Eigen::Index i = 0; i < nc; ++i)
      for (SparseRows::InnerIterator it(prob_.G, coupling_rows_[i]); it; ++it)
        C_(it.col(), i) = it.value();
    if (p > 0) C_.rightCols(p) = prob_.A.transpose();
  }

  BarrierResult snapshot(const Eigen::VectorXd& z, double t, int steps) const {
    BarrierResult res;
    res.z = z;
    res.slack = s_;
    res.t = t;
    res.ineq_duals = (t * s_).cwiseInverse();
    res.eq_duals = w_ / t;
    res.newton_steps = steps;
    return res;
  }

  double objective_increment(const Eigen::VectorXd& z,
                             const Eigen::VectorXd& dz, double step) const {
    double d = 0.0;
    for (Eigen::Index j = 0; j < z.size(); ++j)
      d += prob_.costs[j].increment(z[j], step * dz[j]);
    return d;
  }

  /// Newton centering at fixed t. Returns false when the step budget runs
  /// out.
  bool center(Eigen::VectorXd& z, double t, double tol, int budget,
              int& steps) {
    const Eigen::Index n = z.size();
    const Eigen::Index p = prob_.A.rows();
    for (int iter = 0; iter < 200; ++iter) {
      if (steps >= budget) return false;
      const Eigen::VectorXd inv_s = s_.cwiseInverse();

      Eigen::VectorXd g(n);
      for (Eigen::Index j = 0; j < n; ++j)
        g[j] = t * prob_.costs[j].derivative(z[j]);
      g += prob_.G.transpose() * inv_s;

      // Sparse part of the Hessian, then symmetric Jacobi scaling, which
      // keeps the factorization accurate when barrier curvature spans many
      // orders of magnitude.
      double* val = H0_.valuePtr();
      std::fill(val, val + H0_.nonZeros(), 0.0);
      for (Eigen::Index j = 0; j < n; ++j)
        val[diag_pos_[j]] += t * prob_.costs[j].second_derivative(z[j]);
      for (const auto& c : contrib_) val[c.pos] += c.coef * inv_s[c.row] * inv_s[c.row];
      Eigen::VectorXd d(n);
      for (Eigen::Index j = 0; j < n; ++j)
        d[j] = 1.0 / std::sqrt(std::max(val[diag_pos_[j]], 1e-300));
      for (Eigen::Index col = 0; col < n; ++col)
        for (SparseCols::InnerIterator it(H0_, col); it; ++it)
          it.valueRef() *= d[it.row()] * d[col];
      llt_.factorize(H0_);
      if (llt_.info() != Eigen::Success) {
        for (Eigen::Index j = 0; j < n; ++j) val[diag_pos_[j]] += 1e-12;
        llt_.factorize(H0_);
        if (llt_.info() != Eigen::Success) return false;
      }
      const auto solve_h = [&](const Eigen::MatrixXd& rhs) -> Eigen::MatrixXd {
        Eigen::MatrixXd out = llt_.solve(d.asDiagonal() * rhs);
        return d.asDiagonal() * out;
      };

      // Coupling rows and equalities: H0 dz + U y_u + A^T w = r1 with
      // U^T dz = S^2 y_u (S = coupling slacks) and A dz = r2, reduced to the
      // Schur complement in (y_u, w).
      const Eigen::Index nc = static_cast<Eigen::Index>(coupling_rows_.size());
      const Eigen::Index q = nc + p;
      Eigen::MatrixXd X;
      Eigen::LDLT<Eigen::MatrixXd> schur;
      if (q > 0) {
        X = solve_h(C_);
        Eigen::MatrixXd M = C_.transpose() * X;
        for (Eigen::Index i = 0; i < nc; ++i) {
          const double si = s_[coupling_rows_[i]];
          M(i, i) += si * si;
        }
        schur.compute(M);
      }
      const auto solve_kkt = [&](const Eigen::VectorXd& r1,
                                 const Eigen::VectorXd& r2, Eigen::VectorXd& dz,
                                 Eigen::VectorXd& w) {
        const Eigen::VectorXd u = solve_h(r1);
        if (q == 0) {
          dz = u;
          return;
        }
        Eigen::VectorXd rhs = C_.transpose() * u;
        if (p > 0) rhs.tail(p) -= r2;
        const Eigen::VectorXd y = schur.solve(rhs);
        dz = u - X * y;
        w = y.tail(p);
      };
      // Full Newton matrix applied to a vector, for residual refinement.
      const auto apply_h = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd hx =
            d.cwiseInverse().asDiagonal() *
            (H0_.selfadjointView<Eigen::Lower>() * (d.cwiseInverse().asDiagonal() * x));
        for (Eigen::Index i = 0; i < nc; ++i) {
          const Eigen::Index r = coupling_rows_[i];
          const double c = C_.col(i).dot(x) / (s_[r] * s_[r]);
          hx += c * C_.col(i);
        }
        return hx;
      };
      // Steps stay in the null space of A. Iterates already satisfy A z = b
      // to rounding; restoring that last drift would add a term of size
      // |g| * drift to the slope, which dominates once t is large.
      const Eigen::VectorXd r1 = -g;
      const Eigen::VectorXd r2 = Eigen::VectorXd::Zero(p);
      Eigen::VectorXd dz, w(p);
      solve_kkt(r1, r2, dz, w);
      for (int refine = 0; refine < 1 && q > 0; ++refine) {
        Eigen::VectorXd e1 = r1 - apply_h(dz);
        if (p > 0) e1 -= prob_.A.transpose() * w;
        Eigen::VectorXd e2;
        if (p > 0) e2 = r2 - prob_.A * dz;
        Eigen::VectorXd ddz, dw(p);
        solve_kkt(e1, e2, ddz, dw);
        dz += ddz;
        if (p > 0) w += dw;
      }
      if (p > 0) w_ = w;
      ++steps;

      const double slope = g.dot(dz);
      const double decrement = -slope;
      if (!std::isfinite(decrement)) return false;
      if (decrement / 2.0 <= tol) return true;

      // Largest step keeping every slack positive.
      const Eigen::VectorXd Gdz = prob_.G * dz;
      double step = 1.0;
      for (Eigen::Index r = 0; r < Gdz.size(); ++r)
        if (Gdz[r] > 0.0) step = std::min(step, 0.99 * s_[r] / Gdz[r]);

      // Backtracking on the barrier objective, evaluated as an increment so
      // that small decreases are not lost to cancellation at large t.
      const auto increment = [&](double a) {
        double phi = 0.0;
        for (Eigen::Index r = 0; r < Gdz.size(); ++r)
          phi -= std::log1p(-a * Gdz[r] * inv_s[r]);
        return t * objective_increment(z, dz, a) + phi;
      };
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        if (increment(step) <= 0.01 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) return true;  // no further progress at this precision
      z += step * dz;
      s_ -= step * Gdz;
    }
    return true;
  }

  const BarrierProblem& prob_;
  const SolverOptions& opt_;
  Eigen::VectorXd s_;
  Eigen::VectorXd w_;
  SparseCols H0_;
  std::vector<int> diag_pos_;
  std::vector<Contribution> contrib_;
  std::vector<Eigen::Index> coupling_rows_;
  Eigen::MatrixXd C_;  // coupling rows as columns, then A^T
  Eigen::SimplicialLLT<SparseCols, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
};

/// Rows and variables that remain after fixing forced zeros and dropping
/// redundant rows.
struct Presolved {
  enum class RowFate { Kept, Empty, Forcing, Duplicate };

  std::vector<bool> fixed;          // per instance variable
  std::vector<int> reduced_index;   // per instance variable, -1 when fixed
  std::vector<int> reduced_vars;    // reduced index -> instance variable
  std::vector<RowFate> fate;        // per instance row
  std::vector<int> forcing_order;   // forcing rows in firing order
  std::vector<std::vector<int>> forcing_vars;  // variables each one fixed
  int infeasible_row = -1;
};

inline Presolved presolve(const ConvexInstance& inst) {
  const std::size_t nv = inst.num_vars();
  const std::size_t nr = inst.rows.size();
  Presolved ps;
  ps.fixed.assign(nv, false);
  ps.fate.assign(nr, Presolved::RowFate::Kept);

  const auto scale = [](const LinearRow& row) {
    double s = std::abs(row.rhs);
    for (const auto& t : row.terms) s = std::max(s, std::abs(t.coef));
    return std::max(s, 1.0);
  };

  bool changed = true;
  while (changed && ps.infeasible_row < 0) {
    changed = false;
    for (std::size_t r = 0; r < nr; ++r) {
      if (ps.fate[r] != Presolved::RowFate::Kept) continue;
      const auto& row = inst.rows[r];
      const double tol = 1e-12 * scale(row);
      bool any = false, all_pos = true, all_neg = true;
      for (const auto& t : row.terms) {
        if (ps.fixed[t.var] || t.coef == 0.0) continue;
        any = true;
        all_pos = all_pos && t.coef > 0.0;
        all_neg = all_neg && t.coef < 0.0;
      }
      if (!any) {
        const bool ok = row.sense == Sense::Equal ? std::abs(row.rhs) <= tol
                                                  : row.rhs >= -tol;
        if (!ok) {
          ps.infeasible_row = static_cast<int>(r);
          break;
        }
        ps.fate[r] = Presolved::RowFate::Empty;
        changed = true;
        continue;
      }
      // Nonnegative variables with same-sign coefficients against a bound of
      // zero must all vanish.
      const bool forcing =
          (all_pos && row.rhs <= tol) ||
          (all_neg && row.sense == Sense::Equal && row.rhs >= -tol);
      if (!forcing) continue;
      const bool violated = all_pos ? row.rhs < -tol : row.rhs > tol;
      if (violated) {
        ps.infeasible_row = static_cast<int>(r);
        break;
      }
      std::vector<int> newly;
      for (const auto& t : row.terms)
        if (!ps.fixed[t.var] && t.coef != 0.0) {
          ps.fixed[t.var] = true;
          newly.push_back(t.var);
        }
      ps.fate[r] = Presolved::RowFate::Forcing;
      ps.forcing_order.push_back(static_cast<int>(r));
      ps.forcing_vars.push_back(std::move(newly));
      changed = true;
    }
  }

  // An inequality identical to an equality is tight everywhere; keeping it
  // would leave the barrier without an interior.
  const auto live_terms = [&](const LinearRow& row) {
    std::vector<Term> out;
    for (const auto& t : row.terms)
      if (!ps.fixed[t.var] && t.coef != 0.0) out.push_back(t);
    std::sort(out.begin(), out.end(),
              [](const Term& a, const Term& b) { return a.var < b.var; });
    return out;
  };
  std::vector<std::vector<Term>> eq_terms;
  std::vector<std::size_t> eq_rows;
  for (std::size_t r = 0; r < nr; ++r)
    if (ps.fate[r] == Presolved::RowFate::Kept &&
        inst.rows[r].sense == Sense::Equal) {
      eq_terms.push_back(live_terms(inst.rows[r]));
      eq_rows.push_back(r);
    }
  for (std::size_t r = 0; r < nr; ++r) {
    if (ps.fate[r] != Presolved::RowFate::Kept ||
        inst.rows[r].sense != Sense::LessEqual)
      continue;
    const auto terms = live_terms(inst.rows[r]);
    const double tol = 1e-12 * scale(inst.rows[r]);
    for (std::size_t e = 0; e < eq_rows.size(); ++e) {
      const auto& other = eq_terms[e];
      if (other.size() != terms.size()) continue;
      if (std::abs(inst.rows[eq_rows[e]].rhs - inst.rows[r].rhs) > tol) continue;
      bool same = true;
      for (std::size_t i = 0; i < terms.size() && same; ++i)
        same = terms[i].var == other[i].var &&
               std::abs(terms[i].coef - other[i].coef) <= tol;
      if (same) {
        ps.fate[r] = Presolved::RowFate::Duplicate;
        break;
      }
    }
  }

  ps.reduced_index.assign(nv, -1);
  for (std::size_t j = 0; j < nv; ++j)
    if (!ps.fixed[j]) {
      ps.reduced_index[j] = static_cast<int>(ps.reduced_vars.size());
      ps.reduced_vars.push_back(static_cast<int>(j));
    }
  return ps;
}

/// Rows of the reduced problem in instance order, with bounds appended.
struct ReducedRows {
  std::vector<int> eq_rows;    // instance rows kept as equalities
  std::vector<int> ineq_rows;  // instance rows kept as inequalities
  std::vector<int> upper_vars; // reduced variables with a finite upper bound
};

inline BarrierProblem build_reduced(const ConvexInstance& inst,
                                    const Presolved& ps, ReducedRows& layout) {
  const Eigen::Index n = static_cast<Eigen::Index>(ps.reduced_vars.size());
  for (std::size_t r = 0; r < inst.rows.size(); ++r) {
    if (ps.fate[r] != Presolved::RowFate::Kept) continue;
    (inst.rows[r].sense == Sense::Equal ? layout.eq_rows : layout.ineq_rows)
        .push_back(static_cast<int>(r));
  }
  for (Eigen::Index j = 0; j < n; ++j)
    if (std::isfinite(inst.upper[ps.reduced_vars[j]]))
      layout.upper_vars.push_back(static_cast<int>(j));

  BarrierProblem bp;
  bp.costs.reserve(n);
  for (int v : ps.reduced_vars) bp.costs.push_back(inst.costs[v]);

  bp.A = Eigen::MatrixXd::Zero(layout.eq_rows.size(), n);
  bp.b.resize(layout.eq_rows.size());
  for (std::size_t i = 0; i < layout.eq_rows.size(); ++i) {
    const auto& row = inst.rows[layout.eq_rows[i]];
    for (const auto& t : row.terms)
      if (ps.reduced_index[t.var] >= 0)
        bp.A(i, ps.reduced_index[t.var]) += t.coef;
    bp.b[i] = row.rhs;
  }

  const Eigen::Index m = static_cast<Eigen::Index>(
      layout.ineq_rows.size() + n + layout.upper_vars.size());
  std::vector<Eigen::Triplet<double>> trip;
  bp.h.resize(m);
  Eigen::Index r = 0;
  for (int ir : layout.ineq_rows) {
    const auto& row = inst.rows[ir];
    for (const auto& t : row.terms)
      if (ps.reduced_index[t.var] >= 0)
        trip.emplace_back(r, ps.reduced_index[t.var], t.coef);
    bp.h[r++] = row.rhs;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    trip.emplace_back(r, j, -1.0);
    bp.h[r++] = 0.0;
  }
  for (int j : layout.upper_vars) {
    trip.emplace_back(r, j, 1.0);
    bp.h[r++] = inst.upper[ps.reduced_vars[j]];
  }
  bp.G.resize(m, n);
  bp.G.setFromTriplets(trip.begin(), trip.end());
  bp.G.makeCompressed();

  // Rows mixing several WDs' variables would make the Hessian dense.
  bp.coupling.assign(m, 0);
  for (std::size_t i = 0; i < layout.ineq_rows.size(); ++i) {
    int wd = -1;
    for (const auto& t : inst.rows[layout.ineq_rows[i]].terms) {
      if (ps.reduced_index[t.var] < 0) continue;
      const auto& v = inst.vars[t.var];
      if (v.kind != VarKind::Local && v.kind != VarKind::Offload) continue;
      if (wd >= 0 && v.k != wd) bp.coupling[i] = 1;
      wd = v.k;
    }
  }
  return bp;
}

/// Sharpens barrier multipliers at a fixed primal point. Rows and bounds
/// whose slack exceeds their multiplier estimate are treated as inactive and
/// get multiplier 0. The remaining estimates receive the minimum-norm
/// correction that makes stationarity exact for every variable off its
/// bounds; variables on a bound then absorb their residual in the bound
/// multiplier. `structural` leading rows of G are general rows, the next n are
/// -z <= 0 and the rest are upper bounds on `upper_vars`.
inline void refine_duals(const BarrierProblem& bp, const Eigen::VectorXd& z,
                         const Eigen::VectorXd& s, Eigen::Index structural,
                         const std::vector<int>& upper_vars,
                         BarrierResult& res) {
  const Eigen::Index n = z.size();
  const Eigen::Index p = bp.A.rows();
  Eigen::VectorXd& lam = res.ineq_duals;
  const auto active = [&](Eigen::Index r) { return lam[r] > s[r]; };

  std::vector<int> bound_row(n, -1);  // active bound row per variable
  for (Eigen::Index j = 0; j < n; ++j)
    if (active(structural + j)) bound_row[j] = static_cast<int>(structural + j);
  for (std::size_t i = 0; i < upper_vars.size(); ++i) {
    const Eigen::Index r = structural + n + static_cast<Eigen::Index>(i);
    if (active(r)) bound_row[upper_vars[i]] = static_cast<int>(r);
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < structural; ++r)
    if (active(r)) rows.push_back(r);
  std::vector<Eigen::Index> free_vars;
  for (Eigen::Index j = 0; j < n; ++j)
    if (bound_row[j] < 0) free_vars.push_back(j);

  // Unknowns: equality multipliers, then active general rows.
  const Eigen::Index nu = p + static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, nu);  // column per multiplier
  if (p > 0) J.leftCols(p) = bp.A.transpose();
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (SparseRows::InnerIterator it(bp.G, rows[a]); it; ++it)
      J(it.col(), p + static_cast<Eigen::Index>(a)) = it.value();
  Eigen::VectorXd y(nu);
  y.head(p) = res.eq_duals;
  for (std::size_t a = 0; a < rows.size(); ++a)
    y[p + static_cast<Eigen::Index>(a)] = lam[rows[a]];

  Eigen::VectorXd grad(n);
  for (Eigen::Index j = 0; j < n; ++j) grad[j] = bp.costs[j].derivative(z[j]);

  if (!free_vars.empty() && nu > 0) {
    Eigen::MatrixXd Jf(static_cast<Eigen::Index>(free_vars.size()), nu);
    Eigen::VectorXd rf(Jf.rows());
    for (Eigen::Index i = 0; i < Jf.rows(); ++i) {
      Jf.row(i) = J.row(free_vars[i]);
      rf[i] = -grad[free_vars[i]];
    }
    rf -= Jf * y;
    y += Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(Jf).solve(rf);
  }

  res.eq_duals = y.head(p);
  for (Eigen::Index r = 0; r < structural; ++r) lam[r] = 0.0;
  for (std::size_t a = 0; a < rows.size(); ++a)
    lam[rows[a]] = y[p + static_cast<Eigen::Index>(a)];
  const Eigen::VectorXd station = grad + J * y;
  for (Eigen::Index r = structural; r < lam.size(); ++r) lam[r] = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const int r = bound_row[j];
    if (r < 0) continue;
    lam[r] = r < structural + n ? station[j] : -station[j];
  }
}

/// Full-instance KKT point from a reduced barrier result.
inline KktPoint scatter(const ConvexInstance& inst, const Presolved& ps,
                        const ReducedRows& layout, const BarrierResult& res) {
  KktPoint pt;
  const std::size_t nv = inst.num_vars();
  pt.x.assign(nv, 0.0);
  pt.row_duals.assign(inst.rows.size(), 0.0);
  pt.lower_duals.assign(nv, 0.0);
  pt.upper_duals.assign(nv, 0.0);
  const auto n = static_cast<Eigen::Index>(ps.reduced_vars.size());
  for (Eigen::Index j = 0; j < n; ++j) pt.x[ps.reduced_vars[j]] = res.z[j];
  for (std::size_t i = 0; i < layout.eq_rows.size(); ++i)
    pt.row_duals[layout.eq_rows[i]] = res.eq_duals[static_cast<Eigen::Index>(i)];
  Eigen::Index r = 0;
  for (int ir : layout.ineq_rows) pt.row_duals[ir] = res.ineq_duals[r++];
  for (Eigen::Index j = 0; j < n; ++j)
    pt.lower_duals[ps.reduced_vars[j]] = res.ineq_duals[r++];
  for (int j : layout.upper_vars)
    pt.upper_duals[ps.reduced_vars[j]] = res.ineq_duals[r++];
  return pt;
}

/// Multipliers for rows and variables removed by forcing rows. Rows are
/// visited latest first: every other row touching the variables a row fixed
/// already has its final multiplier by then.
inline void close_forced(const ConvexInstance& inst, const Presolved& ps,
                         KktPoint& pt) {
  const std::size_t nv = inst.num_vars();
  std::vector<std::vector<std::pair<int, double>>> uses(nv);
  for (std::size_t r = 0; r < inst.rows.size(); ++r)
    for (const auto& t : inst.rows[r].terms)
      if (ps.fixed[t.var]) uses[t.var].push_back({static_cast<int>(r), t.coef});
  const auto stationarity_of = [&](int j) {
    double g = inst.costs[j].derivative(0.0);
    for (const auto& [r, c] : uses[j]) g += pt.row_duals[r] * c;
    return g;
  };
  for (std::size_t f = ps.forcing_order.size(); f-- > 0;) {
    const int r = ps.forcing_order[f];
    pt.row_duals[r] = 0.0;
    double mult = 0.0;
    for (int j : ps.forcing_vars[f]) {
      double coef = 0.0;
      for (const auto& t : inst.rows[r].terms)
        if (t.var == j) coef += t.coef;
      const double need = -stationarity_of(j) / coef;
      mult = coef > 0.0 ? std::max(mult, need) : std::min(mult, need);
    }
    pt.row_duals[r] = mult;
  }
  for (std::size_t j = 0; j < nv; ++j)
    if (ps.fixed[j])
      pt.lower_duals[j] = std::max(0.0, stationarity_of(static_cast<int>(j)));
}

}  // namespace detail

/// Solves the instance to KKT-certified optimality with a feasible-start
/// log-barrier method. A phase-I barrier supplies the strictly feasible
/// start; equalities hold at every iterate.
inline ConvexSolution solve(const ConvexInstance& inst,
                            const SolverOptions& opt = {}) {
  using detail::Presolved;
  ConvexSolution sol;
  const std::size_t nv = inst.num_vars();
  const std::size_t nr = inst.rows.size();
  sol.point.x.assign(nv, 0.0);
  sol.point.row_duals.assign(nr, 0.0);
  sol.point.lower_duals.assign(nv, 0.0);
  sol.point.upper_duals.assign(nv, 0.0);

  const auto fail = [&](std::vector<int> rows, std::string msg) {
    sol.status = SolveStatus::Infeasible;
    sol.certificate = std::move(rows);
    sol.message = std::move(msg);
    return sol;
  };

  if (inst.structurally_infeasible) {
    std::vector<int> cap;
    for (std::size_t r = 0; r < nr; ++r)
      if (inst.rows[r].kind == RowKind::Capacity) cap.push_back(static_cast<int>(r));
    return fail(cap, "fixed cached tasks exceed the cache capacity");
  }

  const Presolved ps = detail::presolve(inst);
  if (ps.infeasible_row >= 0)
    return fail({ps.infeasible_row},
                std::string("row '") + to_string(inst.rows[ps.infeasible_row].kind) +
                    "' cannot be met by nonnegative variables");

  detail::ReducedRows layout;
  const detail::BarrierProblem bp = detail::build_reduced(inst, ps, layout);
  const Eigen::Index n = bp.G.cols();
  const Eigen::Index p = bp.A.rows();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);

  if (n > 0) {
    // Least-norm point on the equalities.
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(n);
    if (p > 0) {
      const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(bp.A);
      z0 = cod.solve(bp.b);
      const double err = (bp.A * z0 - bp.b).cwiseAbs().maxCoeff();
      if (!(err <= 1e-9 * std::max(1.0, bp.b.cwiseAbs().maxCoeff()))) {
        std::vector<int> rows(layout.eq_rows.begin(), layout.eq_rows.end());
        return fail(rows, "equality constraints are inconsistent");
      }
    }
    // Phase I: min sigma s.t. G z - sigma <= h, A z = b.
    const Eigen::VectorXd viol = bp.G * z0 - bp.h;
    const double sigma0 = std::max(viol.maxCoeff(), 0.0) + 1.0;
    detail::BarrierProblem p1;
    p1.costs.assign(n + 1, VarCost{});
    p1.costs[n] = VarCost{VarCost::Shape::Linear, 1.0, 1.0};
    p1.A = Eigen::MatrixXd::Zero(p, n + 1);
    p1.A.leftCols(n) = bp.A;
    p1.b = bp.b;
    {
      std::vector<Eigen::Triplet<double>> trip;
      for (int r = 0; r < bp.G.outerSize(); ++r) {
        for (detail::SparseRows::InnerIterator it(bp.G, r); it; ++it)
          trip.emplace_back(r, it.col(), it.value());
        trip.emplace_back(r, n, -1.0);
      }
      // sigma >= -1 keeps phase I bounded.
      trip.emplace_back(bp.G.rows(), n, -1.0);
      p1.G.resize(bp.G.rows() + 1, n + 1);
      p1.G.setFromTriplets(trip.begin(), trip.end());
      p1.h.resize(bp.G.rows() + 1);
      p1.h << bp.h, 1.0;
      p1.coupling = bp.coupling;
      p1.coupling.push_back(0);
    }
    Eigen::VectorXd w0(n + 1);
    w0 << z0, sigma0;
    detail::BarrierSolver phase1(p1, opt);
    const auto r1 = phase1.run(
        w0, 1.0, 1e-12, 0.0, opt.max_newton,
        [&](const detail::BarrierResult& r) { return r.z[n] < 0.0; });
    sol.newton_steps += r1.newton_steps;
    if (!(r1.z[n] < 0.0)) {
      std::vector<int> cert;
      const double top = r1.ineq_duals.head(layout.ineq_rows.size()).size() > 0
                             ? r1.ineq_duals.head(layout.ineq_rows.size()).maxCoeff()
                             : 0.0;
      for (std::size_t i = 0; i < layout.ineq_rows.size(); ++i)
        if (r1.ineq_duals[i] > 1e-3 * top) cert.push_back(layout.ineq_rows[i]);
      for (int e : layout.eq_rows) cert.push_back(e);
      return fail(cert, r1.z[n] > 1e-9 ? "no feasible point"
                                       : "no strictly feasible point");
    }
    z = r1.z.head(n);

    // Phase II.
    detail::BarrierSolver main(bp, opt);
    double f0 = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) f0 += bp.costs[j].value(z[j]);
    const double m = static_cast<double>(bp.G.rows());
    const double t0 = std::max(1.0, m / std::max(std::abs(f0), 1e-3));
    const auto structural = static_cast<Eigen::Index>(layout.ineq_rows.size());
    // Refined multipliers usually certify the iterate long before the
    // duality gap reaches tolerance; raw barrier multipliers are the fallback.
    double best = std::numeric_limits<double>::infinity();
    const auto certify = [&](const detail::BarrierResult& r) {
      auto refined = r;
      detail::refine_duals(bp, r.z, r.slack, structural, layout.upper_vars,
                           refined);
      const detail::BarrierResult* candidates[] = {&refined, &r};
      for (const auto* cand : candidates) {
        KktPoint pt = detail::scatter(inst, ps, layout, *cand);
        detail::close_forced(inst, ps, pt);
        const double res = kkt_residual(inst, pt);
        if (res < best) {
          best = res;
          sol.point = std::move(pt);
        }
      }
      return best <= opt.tol;
    };
    const auto r2 = main.run(
        z, t0, std::min(opt.tol, 1e-8) * 1e-2, opt.tight_gap,
        opt.max_newton - sol.newton_steps,
        [&](const detail::BarrierResult& r) {
          return m / r.t <= opt.tight_gap && certify(r);
        });
    sol.newton_steps += r2.newton_steps;
    if (!(best <= opt.tol)) certify(r2);
    sol.status = r2.converged ? SolveStatus::Optimal : SolveStatus::MaxIter;
  } else {
    sol.status = SolveStatus::Optimal;
    detail::close_forced(inst, ps, sol.point);
  }

  sol.objective = inst.objective(sol.point.x) / kUnitsPerJoule;
  sol.kkt_residual = kkt_residual(inst, sol.point);
  if (sol.status == SolveStatus::Optimal && !(sol.kkt_residual <= opt.tol)) {
    sol.status = SolveStatus::MaxIter;
    sol.message = "KKT residual above tolerance";
  }
  return sol;
}

/// Plain-text dump of an instance: variables with their cost terms, then one
/// line per constraint row. Coefficients are in solver units (Kbit, mJ).
inline void dump_instance(const ConvexInstance& inst, std::ostream& os) {
  static constexpr const char* kNames[] = {"alpha", "off_p1", "mec_p1",
                                           "loc",   "off",    "mec"};
  static constexpr const char* kShapes[] = {"none", "linear", "cubic", "exp"};
  os << "# convex instance: K=" << inst.K << " N=" << inst.N
     << " N_p=" << inst.Np << " L=" << inst.L
     << " placement=" << inst.placement.bitmap() << "\n";
  os.precision(17);
  os << "vars " << inst.vars.size() << "\n";
  for (std::size_t j = 0; j < inst.vars.size(); ++j) {
    const auto& v = inst.vars[j];
    const auto& c = inst.costs[j];
    os << "var " << j << ' ' << kNames[static_cast<int>(v.kind)] << '[' << v.k
       << ',' << v.n << "] cost " << kShapes[static_cast<int>(c.shape)] << ' '
       << c.coef << ' ' << c.rate << " upper " << inst.upper[j] << "\n";
  }
  os << "rows " << inst.rows.size() << "\n";
  for (std::size_t r = 0; r < inst.rows.size(); ++r) {
    const auto& row = inst.rows[r];
    os << "row " << r << ' ' << to_string(row.kind) << '[' << row.k << ','
       << row.n << "] " << (row.sense == Sense::Equal ? "=" : "<=") << ' '
       << row.rhs << " :";
    for (const auto& t : row.terms) os << ' ' << t.var << ':' << t.coef;
    os << "\n";
  }
}

}  // namespace mecache
