#include "mgdd/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace mgdd {

void solve_tridiagonal(const Eigen::VectorXd& diag, double off, Eigen::Ref<Eigen::MatrixXd> rhs) {
  const Index n = diag.size();
  Eigen::VectorXd cp(n);
  double m = diag[0];
  cp[0] = off / m;
  rhs.col(0) /= m;
  for (Index i = 1; i < n; ++i) {
    m = diag[i] - off * cp[i - 1];
    cp[i] = off / m;
    rhs.col(i) = (rhs.col(i) - off * rhs.col(i - 1)) / m;
  }
  for (Index i = n - 2; i >= 0; --i) rhs.col(i) -= cp[i] * rhs.col(i + 1);
}

namespace {

struct Term {
  Index level;
  Index node;
  double c;
};

// Sparse linear functionals over the time levels of rho and the per-step
// convective face fluxes.
struct Stencil {
  std::vector<Term> rho;
  std::vector<Index> rho_start{0};
  std::vector<Term> face;  // level = step (1-based), node = face index
  std::vector<Index> face_start{0};

  void close() {
    rho_start.push_back(static_cast<Index>(rho.size()));
    face_start.push_back(static_cast<Index>(face.size()));
  }
  Index size() const { return static_cast<Index>(rho_start.size()) - 1; }
};

struct Weight {
  Index i;
  double w;
};

Weight series_weight(double t, Index count, double final_time) {
  const auto [i, w] = locate(t / final_time * static_cast<double>(count - 1), count - 1);
  return {i, w};
}

}  // namespace

struct FvmOracle::Run {
  EdgeType type = EdgeType::inner;
  Index n = 0;
  Index steps = 0;
  double h = 0.0;
  double tau = 0.0;
  double nu = 0.0;
  double off = 0.0;
  Eigen::VectorXd mass;
  Eigen::VectorXd base_diag;
  Eigen::MatrixXd rho;   // (n + 1) x (steps + 1)
  Eigen::MatrixXd face;  // n x steps, convective flux of step s in column s - 1
  Eigen::VectorXd a;     // Robin rate at the origin per step
  Eigen::VectorXd b;     // Robin rate at the target per step
  const Eigen::MatrixXd* projection = nullptr;

  Eigen::VectorXd diag(Index step) const {
    Eigen::VectorXd d = base_diag;
    d[0] += tau * a[step - 1];
    d[n] += tau * b[step - 1];
    return d;
  }
};

FvmOracle::FvmOracle(FvmConfig fvm, SensorGrids grids) : fvm_(std::move(fvm)), grids_(grids) {
  if (std::abs(fvm_.final_time - grids_.final_time) > 1e-12)
    throw SurrogateError("oracle time horizon differs from the sensor grid");
  if (fvm_.cells_per_edge < 2) throw SurrogateError("oracle needs at least two cells");
}

std::array<double, 2> FvmOracle::resolution() const {
  return {fvm_.final_time / static_cast<double>(fvm_.time_steps),
          1.0 / static_cast<double>(fvm_.cells_per_edge)};
}

const Eigen::MatrixXd& FvmOracle::projection(double length) const {
  std::lock_guard lock(mutex_);
  auto it = projections_.find(length);
  if (it != projections_.end()) return it->second;
  const Index n = fvm_.cells_per_edge;
  const double h = length / static_cast<double>(n);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n + 1, grids_.n_init);
  UniformSeries unit{0.0, length, Eigen::VectorXd::Zero(grids_.n_init)};
  const double dx = unit.spacing();
  for (Index i = 0; i < grids_.n_init; ++i) {
    unit.values.setZero();
    unit.values[i] = 1.0;
    const double lo = (static_cast<double>(i) - 1.0) * dx, hi = (static_cast<double>(i) + 1.0) * dx;
    for (Index k = 1; k < n; ++k) {
      const double a = std::max(0.0, (static_cast<double>(k) - 0.5) * h);
      const double b = std::min(length, (static_cast<double>(k) + 0.5) * h);
      if (b <= lo || a >= hi) continue;
      p(k, i) = integrate_profile(unit, a, b) / (b - a);
    }
  }
  // End nodes take the point values so that edges meeting at a vertex start equal.
  p(0, 0) = 1.0;
  p(n, grids_.n_init - 1) = 1.0;
  return projections_.emplace(length, std::move(p)).first->second;
}

FvmOracle::Run FvmOracle::forward(const SensorInput& s) const {
  check_input(s);
  Run r;
  r.type = s.type;
  r.n = fvm_.cells_per_edge;
  r.steps = fvm_.time_steps;
  r.h = s.length / static_cast<double>(r.n);
  r.tau = fvm_.final_time / static_cast<double>(r.steps);
  r.nu = s.velocity;
  r.off = -r.tau * fvm_.epsilon / r.h;
  r.projection = &projection(s.length);
  const Index n = r.n;

  r.mass = Eigen::VectorXd::Constant(n + 1, r.h);
  r.mass[0] = r.mass[n] = 0.5 * r.h;
  r.base_diag = r.mass;
  r.base_diag.segment(1, n - 1).array() -= 2.0 * r.off;
  r.base_diag[0] -= r.off;
  r.base_diag[n] -= r.off;

  const UniformSeries uo = s.origin_series();
  const UniformSeries ut = s.target_series();
  r.a = Eigen::VectorXd::Zero(r.steps);
  r.b = Eigen::VectorXd::Zero(r.steps);
  r.rho.resize(n + 1, r.steps + 1);
  r.face.resize(n, r.steps);
  r.rho.col(0) = (*r.projection) * s.init;

  const double alpha = fvm_.alpha;
  Eigen::MatrixXd rhs(1, n + 1);
  for (Index step = 1; step <= r.steps; ++step) {
    const double t_old = static_cast<double>(step - 1) * r.tau;
    const double t_new = static_cast<double>(step) * r.tau;
    const auto prev = r.rho.col(step - 1);
    const Eigen::ArrayXd f = saturation(prev.array());
    r.face.col(step - 1) = 0.5 * r.nu * (f.head(n) + f.tail(n)) -
                           0.5 * alpha * (prev.tail(n) - prev.head(n)).array();
    rhs.row(0) = r.mass.cwiseProduct(prev).transpose();
    rhs.row(0).head(n) -= r.tau * r.face.col(step - 1).transpose();
    rhs.row(0).tail(n) += r.tau * r.face.col(step - 1).transpose();
    if (s.type == EdgeType::inflow) {
      r.a[step - 1] = uo(t_old);
      rhs(0, 0) += r.tau * r.a[step - 1];
    } else {
      rhs(0, 0) += r.tau * uo(t_new);
    }
    if (s.type == EdgeType::outflow)
      r.b[step - 1] = ut(t_old);
    else
      rhs(0, n) -= r.tau * ut(t_new);
    solve_tridiagonal(r.diag(step), r.off, rhs);
    r.rho.col(step) = rhs.row(0).transpose();
    if (!r.rho.col(step).allFinite()) throw SurrogateError("oracle produced a non-finite state");
  }
  return r;
}

namespace {

// Density: bilinear in (t, x) over the node grid.
Stencil density_stencil(const FvmOracle::Run& r, const QueryPoints& q) {
  Stencil st;
  for (Index i = 0; i < q.size(); ++i) {
    const auto [n, wt] = locate(q.t[i] / r.tau, r.steps);
    const auto [k, wx] = locate(q.x[i] / r.h, r.n);
    st.rho.push_back({n, k, (1.0 - wt) * (1.0 - wx)});
    st.rho.push_back({n, k + 1, (1.0 - wt) * wx});
    st.rho.push_back({n + 1, k, wt * (1.0 - wx)});
    st.rho.push_back({n + 1, k + 1, wt * wx});
    st.close();
  }
  return st;
}

// Flux: piecewise linear through the end fluxes and faces, linear between steps.
Stencil flux_stencil(const FvmOracle::Run& r, const QueryPoints& q, double eps) {
  Stencil st;
  const Index n = r.n;
  const double h = r.h;
  const double half = 0.5 * h / r.tau;
  auto add_face = [&](Index level, Index j, double c) {
    st.rho.push_back({level, j + 1, -eps / h * c});
    st.rho.push_back({level, j, eps / h * c});
    st.face.push_back({level, j, c});
  };
  auto add_level = [&](Index level, double x, double c) {
    if (c == 0.0) return;
    level = std::max<Index>(level, 1);
    const double len = h * static_cast<double>(n);
    if (x <= 0.5 * h) {
      const double w = std::clamp(x / (0.5 * h), 0.0, 1.0);
      const double co = (1.0 - w) * c;
      st.rho.push_back({level, 0, half * co});
      st.rho.push_back({level - 1, 0, -half * co});
      add_face(level, 0, co + w * c);
    } else if (x >= len - 0.5 * h) {
      const double w = std::clamp((x - (len - 0.5 * h)) / (0.5 * h), 0.0, 1.0);
      const double ct = w * c;
      st.rho.push_back({level, n, -half * ct});
      st.rho.push_back({level - 1, n, half * ct});
      add_face(level, n - 1, (1.0 - w) * c + ct);
    } else {
      const auto [j, w] = locate(x / h - 0.5, n - 1);
      add_face(level, j, (1.0 - w) * c);
      add_face(level, j + 1, w * c);
    }
  };
  for (Index i = 0; i < q.size(); ++i) {
    const auto [lv, wt] = locate(q.t[i] / r.tau, r.steps);
    add_level(lv, q.x[i], 1.0 - wt);
    add_level(lv + 1, q.x[i], wt);
    st.close();
  }
  return st;
}

Eigen::VectorXd apply(const Stencil& st, const Eigen::MatrixXd& rho, const Eigen::MatrixXd& face) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(st.size());
  for (Index i = 0; i < st.size(); ++i) {
    for (Index k = st.rho_start[i]; k < st.rho_start[i + 1]; ++k) {
      const Term& t = st.rho[static_cast<std::size_t>(k)];
      out[i] += t.c * rho(t.node, t.level);
    }
    for (Index k = st.face_start[i]; k < st.face_start[i + 1]; ++k) {
      const Term& t = st.face[static_cast<std::size_t>(k)];
      out[i] += t.c * face(t.node, t.level - 1);
    }
  }
  return out;
}

// Tangents stored per level as k x (nodes) blocks.
Eigen::MatrixXd apply_tangent(const Stencil& st, const std::vector<Eigen::MatrixXd>& d_rho,
                              const std::vector<Eigen::MatrixXd>& d_face, Index k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(st.size(), k);
  for (Index i = 0; i < st.size(); ++i) {
    for (Index m = st.rho_start[i]; m < st.rho_start[i + 1]; ++m) {
      const Term& t = st.rho[static_cast<std::size_t>(m)];
      out.row(i) += t.c * d_rho[static_cast<std::size_t>(t.level)].col(t.node).transpose();
    }
    for (Index m = st.face_start[i]; m < st.face_start[i + 1]; ++m) {
      const Term& t = st.face[static_cast<std::size_t>(m)];
      out.row(i) += t.c * d_face[static_cast<std::size_t>(t.level - 1)].col(t.node).transpose();
    }
  }
  return out;
}

void scatter(const Stencil& st, const Eigen::VectorXd& bar, Eigen::MatrixXd& rho_bar,
             Eigen::MatrixXd& face_bar) {
  for (Index i = 0; i < st.size(); ++i) {
    if (bar[i] == 0.0) continue;
    for (Index k = st.rho_start[i]; k < st.rho_start[i + 1]; ++k) {
      const Term& t = st.rho[static_cast<std::size_t>(k)];
      rho_bar(t.node, t.level) += t.c * bar[i];
    }
    for (Index k = st.face_start[i]; k < st.face_start[i + 1]; ++k) {
      const Term& t = st.face[static_cast<std::size_t>(k)];
      face_bar(t.node, t.level - 1) += t.c * bar[i];
    }
  }
}

class OracleTape : public EdgeTape {
 public:
  OracleTape(FvmOracle::Run run, Stencil dens, Stencil flux, const SensorGrids& grids, double alpha,
             double final_time)
      : run_(std::move(run)), dens_(std::move(dens)), flux_st_(std::move(flux)), grids_(grids),
        alpha_(alpha), final_time_(final_time) {}

  void finish() {
    rho_ = apply(dens_, run_.rho, run_.face);
    flux_ = apply(flux_st_, run_.rho, run_.face);
  }

  Eigen::VectorXd pullback(const Eigen::VectorXd& rho_bar,
                           const Eigen::VectorXd& flux_bar) const override {
    const FvmOracle::Run& r = run_;
    const Index n = r.n;
    Eigen::MatrixXd lam_all = Eigen::MatrixXd::Zero(n + 1, r.steps + 1);
    Eigen::MatrixXd face_bar = Eigen::MatrixXd::Zero(n, r.steps);
    scatter(dens_, rho_bar, lam_all, face_bar);
    scatter(flux_st_, flux_bar, lam_all, face_bar);

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(grids_.n_sensor());
    auto origin = grad.segment(0, grids_.n_origin);
    auto target = grad.segment(grids_.n_origin, grids_.n_target);
    double nu_bar = 0.0;

    Eigen::MatrixXd mu(1, n + 1);
    Eigen::VectorXd lam = lam_all.col(r.steps);
    for (Index step = r.steps; step >= 1; --step) {
      mu.row(0) = lam.transpose();
      solve_tridiagonal(r.diag(step), r.off, mu);
      const double t_old = static_cast<double>(step - 1) * r.tau;
      const double t_new = static_cast<double>(step) * r.tau;
      const double mu0 = mu(0, 0), mun = mu(0, n);
      if (r.type == EdgeType::inflow) {
        const auto w = series_weight(t_old, grids_.n_origin, final_time_);
        const double g = r.tau * mu0 * (1.0 - r.rho(0, step));
        origin[w.i] += (1.0 - w.w) * g;
        origin[w.i + 1] += w.w * g;
      } else {
        const auto w = series_weight(t_new, grids_.n_origin, final_time_);
        origin[w.i] += (1.0 - w.w) * r.tau * mu0;
        origin[w.i + 1] += w.w * r.tau * mu0;
      }
      if (r.type == EdgeType::outflow) {
        const auto w = series_weight(t_old, grids_.n_target, final_time_);
        const double g = -r.tau * mun * r.rho(n, step);
        target[w.i] += (1.0 - w.w) * g;
        target[w.i + 1] += w.w * g;
      } else {
        const auto w = series_weight(t_new, grids_.n_target, final_time_);
        target[w.i] -= (1.0 - w.w) * r.tau * mun;
        target[w.i + 1] -= w.w * r.tau * mun;
      }
      const Eigen::VectorXd fb =
          face_bar.col(step - 1) + r.tau * (mu.row(0).tail(n) - mu.row(0).head(n)).transpose();
      const auto prev = r.rho.col(step - 1);
      const Eigen::ArrayXd f = saturation(prev.array());
      const Eigen::ArrayXd fp = 1.0 - 2.0 * prev.array();
      lam = lam_all.col(step - 1) + r.mass.cwiseProduct(mu.row(0).transpose());
      lam.head(n).array() += fb.array() * (0.5 * r.nu * fp.head(n) + 0.5 * alpha_);
      lam.tail(n).array() += fb.array() * (0.5 * r.nu * fp.tail(n) - 0.5 * alpha_);
      nu_bar += 0.5 * (fb.array() * (f.head(n) + f.tail(n))).sum();
    }
    grad.segment(grids_.n_origin + grids_.n_target, grids_.n_init) = r.projection->transpose() * lam;
    grad[grad.size() - 1] = nu_bar;
    return grad;
  }

 private:
  FvmOracle::Run run_;
  Stencil dens_;
  Stencil flux_st_;
  SensorGrids grids_;
  double alpha_;
  double final_time_;
};

}  // namespace

EdgeValues FvmOracle::evaluate(const SensorInput& s, const QueryPoints& q,
                               const Eigen::MatrixXd* directions) const {
  const Run r = forward(s);
  const Stencil dens = density_stencil(r, q);
  const Stencil flux = flux_stencil(r, q, fvm_.epsilon);
  EdgeValues out;
  out.rho = apply(dens, r.rho, r.face);
  out.flux = apply(flux, r.rho, r.face);
  if (!directions) return out;

  const Eigen::MatrixXd& D = *directions;
  if (D.rows() != grids_.n_sensor()) throw SurrogateError("direction matrix has wrong row count");
  const Index k = D.cols();
  const Index n = r.n;
  const auto Do = D.topRows(grids_.n_origin);
  const auto Dt = D.middleRows(grids_.n_origin, grids_.n_target);
  const auto Di = D.middleRows(grids_.n_origin + grids_.n_target, grids_.n_init);
  const Eigen::RowVectorXd Dnu = D.row(D.rows() - 1);
  const double alpha = fvm_.alpha;

  auto series_dir = [&](const auto& block, double t, Index count) -> Eigen::RowVectorXd {
    const auto w = series_weight(t, count, grids_.final_time);
    return (1.0 - w.w) * block.row(w.i) + w.w * block.row(w.i + 1);
  };

  std::vector<Eigen::MatrixXd> d_rho(static_cast<std::size_t>(r.steps + 1));
  std::vector<Eigen::MatrixXd> d_face(static_cast<std::size_t>(r.steps));
  d_rho[0] = (*r.projection * Di).transpose();
  for (Index step = 1; step <= r.steps; ++step) {
    const double t_old = static_cast<double>(step - 1) * r.tau;
    const double t_new = static_cast<double>(step) * r.tau;
    const Eigen::MatrixXd& dp = d_rho[static_cast<std::size_t>(step - 1)];
    const auto prev = r.rho.col(step - 1);
    const Eigen::ArrayXd f = saturation(prev.array());
    const Eigen::ArrayXd fp = 1.0 - 2.0 * prev.array();
    const Eigen::RowVectorXd cl = (0.5 * r.nu * fp.head(n) + 0.5 * alpha).matrix().transpose();
    const Eigen::RowVectorXd cr = (0.5 * r.nu * fp.tail(n) - 0.5 * alpha).matrix().transpose();
    const Eigen::RowVectorXd cv = (0.5 * (f.head(n) + f.tail(n))).matrix().transpose();
    Eigen::MatrixXd& dF = d_face[static_cast<std::size_t>(step - 1)];
    dF = dp.leftCols(n) * cl.asDiagonal();
    dF += dp.rightCols(n) * cr.asDiagonal();
    dF += Dnu.transpose() * cv;

    Eigen::MatrixXd rhs = dp * r.mass.asDiagonal();
    rhs.leftCols(n) -= r.tau * dF;
    rhs.rightCols(n) += r.tau * dF;
    if (r.type == EdgeType::inflow)
      rhs.col(0) += r.tau * (1.0 - r.rho(0, step)) * series_dir(Do, t_old, grids_.n_origin).transpose();
    else
      rhs.col(0) += r.tau * series_dir(Do, t_new, grids_.n_origin).transpose();
    if (r.type == EdgeType::outflow)
      rhs.col(n) -= r.tau * r.rho(n, step) * series_dir(Dt, t_old, grids_.n_target).transpose();
    else
      rhs.col(n) -= r.tau * series_dir(Dt, t_new, grids_.n_target).transpose();
    solve_tridiagonal(r.diag(step), r.off, rhs);
    d_rho[static_cast<std::size_t>(step)] = std::move(rhs);
  }
  out.d_rho = apply_tangent(dens, d_rho, d_face, k);
  out.d_flux = apply_tangent(flux, d_rho, d_face, k);
  return out;
}

std::unique_ptr<EdgeTape> FvmOracle::record(const SensorInput& s, const QueryPoints& q) const {
  Run r = forward(s);
  Stencil dens = density_stencil(r, q);
  Stencil flux = flux_stencil(r, q, fvm_.epsilon);
  auto tape = std::make_unique<OracleTape>(std::move(r), std::move(dens), std::move(flux), grids_,
                                           fvm_.alpha, grids_.final_time);
  tape->finish();
  return tape;
}

}  // namespace mgdd
