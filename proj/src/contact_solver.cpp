#include "stiv/contact_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace stiv {

namespace {

int owner_of(const std::vector<std::int64_t>& offsets, std::int64_t index) {
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), index);
  return static_cast<int>(it - offsets.begin()) - 1;
}

double global_max(double x, comm::Communicator& comm) {
  double m = x;
  for (double v : comm.allgather(x)) m = std::max(m, v);
  return m;
}

}  // namespace

LcpSystem make_lcp_system(std::int64_t dim, std::vector<std::int64_t> rank_offsets,
                          std::vector<std::vector<std::pair<std::int64_t, double>>> rows,
                          std::vector<double> q, comm::Communicator& comm) {
  if (static_cast<int>(rank_offsets.size()) != comm.size() + 1 || rank_offsets.back() != dim) {
    throw SolverError("make_lcp_system: row ownership does not cover the system");
  }
  LcpSystem s;
  s.dim = dim;
  s.rank_offsets = std::move(rank_offsets);
  s.row_begin = s.rank_offsets[comm.rank()];
  const auto owned = static_cast<std::size_t>(s.rank_offsets[comm.rank() + 1] - s.row_begin);
  if (rows.size() != owned || q.size() != owned) {
    throw SolverError("make_lcp_system: " + std::to_string(rows.size()) + " rows for " +
                      std::to_string(owned) + " owned indices");
  }
  s.rows = std::move(rows);
  s.q = std::move(q);

  std::set<std::int64_t> remote;
  const std::int64_t row_end = s.row_begin + static_cast<std::int64_t>(owned);
  for (auto& row : s.rows) {
    std::sort(row.begin(), row.end());
    for (const auto& [col, value] : row) {
      if (col < 0 || col >= dim) throw SolverError("lcp: column index " + std::to_string(col) + " out of range");
      if (!std::isfinite(value)) throw SolverError("lcp: non-finite matrix entry");
      if (col < s.row_begin || col >= row_end) remote.insert(col);
    }
  }
  for (double v : s.q) {
    if (!std::isfinite(v)) throw SolverError("lcp: non-finite constraint value");
  }
  s.remote_columns.assign(remote.begin(), remote.end());

  // Tell each owner which of its entries this rank reads.
  std::map<int, std::vector<std::int64_t>> requests;
  for (auto col : s.remote_columns) requests[owner_of(s.rank_offsets, col)].push_back(col);
  for (const auto& env : comm.sparse_all_to_all(requests)) {
    s.send_plan[env.source].push_back(env.payload - s.row_begin);
  }
  return s;
}

LcpSystem distribute_lcp(const Eigen::MatrixXd& b, const Eigen::VectorXd& q,
                         comm::Communicator& comm) {
  if (b.rows() != b.cols() || b.rows() != q.size()) throw SolverError("distribute_lcp: dimension mismatch");
  const std::int64_t n = q.size();
  std::vector<std::int64_t> offsets(comm.size() + 1);
  for (int r = 0; r <= comm.size(); ++r) {
    offsets[r] = r < comm.size() ? comm::block_range(n, r, comm.size()).first : n;
  }
  const auto [lo, hi] = comm::block_range(n, comm.rank(), comm.size());
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows;
  std::vector<double> qs;
  for (std::int64_t i = lo; i < hi; ++i) {
    auto& row = rows.emplace_back();
    for (std::int64_t j = 0; j < n; ++j) {
      if (b(i, j) != 0.0) row.emplace_back(j, b(i, j));
    }
    qs.push_back(q[i]);
  }
  return make_lcp_system(n, std::move(offsets), std::move(rows), std::move(qs), comm);
}

namespace {

struct Contribution {
  std::int64_t row, col, body;
  double value;
};

}  // namespace

LcpSystem assemble_lcp_matrix(const ContactDetection& detection, const std::vector<MeshBody>& local,
                              const StepOperator& step_op, comm::Communicator& comm) {
  const std::int64_t dim = detection.global_count();
  std::map<int, std::vector<Contribution>> outgoing;
  for (const auto& body : local) {
    const auto it = detection.jacobian.find(body.global_id);
    if (it == detection.jacobian.end()) continue;
    const auto& cols = it->second;
    if (cols.size() != body.vertex_count()) {
      throw SolverError("assemble_lcp_matrix: Jacobian size mismatch for body " +
                        std::to_string(body.global_id));
    }
    std::set<std::int64_t> touching;
    for (const auto& c : cols) {
      if (c.volume < 0) continue;
      if (c.volume >= dim) {
        throw SolverError("assemble_lcp_matrix: volume index " + std::to_string(c.volume) + " not found");
      }
      touching.insert(c.volume);
    }
    for (auto k : touching) {
      std::vector<Vec3> g(body.vertex_count(), Vec3::Zero());
      for (std::size_t v = 0; v < cols.size(); ++v) {
        if (cols[v].volume == k) g[v] = cols[v].grad;
      }
      const auto disp = step_op.apply(body, g);
      std::map<std::int64_t, double> column;  // j -> g_j . disp
      for (std::size_t v = 0; v < cols.size(); ++v) {
        if (cols[v].volume >= 0) column[cols[v].volume] += cols[v].grad.dot(disp[v]);
      }
      for (const auto& [j, value] : column) {
        if (!std::isfinite(value)) throw SolverError("assemble_lcp_matrix: non-finite entry");
        outgoing[detection.owner_of(j)].push_back({j, k, body.global_id, value});
      }
    }
  }
  auto incoming = comm.sparse_all_to_all(outgoing);
  std::vector<Contribution> parts;
  parts.reserve(incoming.size());
  for (const auto& env : incoming) parts.push_back(env.payload);
  std::sort(parts.begin(), parts.end(), [](const Contribution& a, const Contribution& b) {
    return std::tie(a.row, a.col, a.body) < std::tie(b.row, b.col, b.body);
  });

  const std::int64_t row_begin = detection.offset(comm.rank());
  const std::size_t owned = detection.volumes.size();
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows(owned);
  for (const auto& p : parts) {
    auto& row = rows.at(static_cast<std::size_t>(p.row - row_begin));
    if (!row.empty() && row.back().first == p.col) {
      row.back().second += p.value;
    } else {
      row.emplace_back(p.col, p.value);
    }
  }
  std::vector<double> q(owned);
  for (std::size_t i = 0; i < owned; ++i) q[i] = -detection.volumes[i].value;
  return make_lcp_system(dim, detection.rank_offsets, std::move(rows), std::move(q), comm);
}

std::vector<double> lcp_matvec(const LcpSystem& system, const std::vector<double>& x,
                               comm::Communicator& comm) {
  if (x.size() != system.local_size()) {
    throw SolverError("lcp_matvec: vector has " + std::to_string(x.size()) + " entries, expected " +
                      std::to_string(system.local_size()));
  }
  std::map<int, std::vector<double>> outgoing;
  for (const auto& [dst, offsets] : system.send_plan) {
    auto& out = outgoing[dst];
    for (auto o : offsets) out.push_back(x[static_cast<std::size_t>(o)]);
  }
  const auto incoming = comm.sparse_all_to_all(outgoing);
  if (incoming.size() != system.remote_columns.size()) {
    throw SolverError("lcp_matvec: received " + std::to_string(incoming.size()) + " remote entries, expected " +
                      std::to_string(system.remote_columns.size()));
  }
  const std::int64_t row_end = system.row_begin + static_cast<std::int64_t>(system.local_size());
  std::vector<double> y(system.local_size(), 0.0);
  for (std::size_t i = 0; i < system.rows.size(); ++i) {
    double acc = 0.0;
    for (const auto& [col, value] : system.rows[i]) {
      double xc;
      if (col >= system.row_begin && col < row_end) {
        xc = x[static_cast<std::size_t>(col - system.row_begin)];
      } else {
        const auto it = std::lower_bound(system.remote_columns.begin(), system.remote_columns.end(), col);
        xc = incoming[static_cast<std::size_t>(it - system.remote_columns.begin())].payload;
      }
      acc += value * xc;
    }
    y[i] = acc;
  }
  return y;
}

std::vector<double> fetch_entries(const std::vector<std::int64_t>& rank_offsets,
                                  const std::vector<double>& local,
                                  const std::vector<std::int64_t>& wanted, comm::Communicator& comm) {
  std::map<int, std::vector<std::int64_t>> requests;
  for (auto idx : wanted) requests[owner_of(rank_offsets, idx)].push_back(idx);
  const auto asked = comm.sparse_all_to_all(requests);
  std::map<int, std::vector<double>> replies;
  const std::int64_t base = rank_offsets[comm.rank()];
  for (const auto& env : asked) {
    replies[env.source].push_back(local.at(static_cast<std::size_t>(env.payload - base)));
  }
  const auto answered = comm.sparse_all_to_all(replies);
  std::vector<double> out;
  out.reserve(answered.size());
  for (const auto& env : answered) out.push_back(env.payload);
  return out;
}

double ordered_dot(const std::vector<double>& x, const std::vector<double>& y,
                   comm::Communicator& comm) {
  std::vector<double> prod(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) prod[i] = x[i] * y[i];
  double acc = 0.0;
  for (double v : comm.allgatherv(prod)) acc += v;
  return acc;
}

double min_map_residual(const LcpSystem& system, const std::vector<double>& lambda,
                        comm::Communicator& comm) {
  const auto b = lcp_matvec(system, lambda, comm);
  double r = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    r = std::max(r, std::abs(std::min(lambda[i], system.q[i] + b[i])));
  }
  return global_max(r, comm);
}

namespace {

// Restarted GMRES for (B_AA + shift I) x = rhs on the masked index set.
// Entries outside the mask stay zero.
struct GmresOutcome {
  int iterations = 0;
  bool converged = false;
};

GmresOutcome masked_gmres(const LcpSystem& system, const std::vector<char>& mask,
                          const std::vector<double>& rhs, std::vector<double>& x, const LcpOptions& opt,
                          comm::Communicator& comm) {
  const std::size_t n = rhs.size();
  auto apply = [&](const std::vector<double>& v) {
    auto y = lcp_matvec(system, v, comm);
    for (std::size_t i = 0; i < n; ++i) y[i] = mask[i] ? y[i] + opt.shift * v[i] : 0.0;
    return y;
  };
  GmresOutcome out;
  const double rhs_norm = std::sqrt(ordered_dot(rhs, rhs, comm));
  std::fill(x.begin(), x.end(), 0.0);
  if (rhs_norm == 0.0) {
    out.converged = true;
    return out;
  }
  const double target = opt.gmres_tol * rhs_norm;
  const int m = std::max(1, opt.gmres_restart);
  while (out.iterations < opt.gmres_max_iter) {
    auto ax = apply(x);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ax[i];
    double beta = std::sqrt(ordered_dot(r, r, comm));
    if (beta <= target) {
      out.converged = true;
      return out;
    }
    std::vector<std::vector<double>> v(1, r);
    for (auto& e : v[0]) e /= beta;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
    std::vector<double> cs(m), sn(m), g(m + 1, 0.0);
    g[0] = beta;
    int k = 0;
    for (; k < m && out.iterations < opt.gmres_max_iter; ++k) {
      ++out.iterations;
      auto w = apply(v[k]);
      for (int i = 0; i <= k; ++i) {
        h(i, k) = ordered_dot(w, v[i], comm);
        for (std::size_t t = 0; t < n; ++t) w[t] -= h(i, k) * v[i][t];
      }
      h(k + 1, k) = std::sqrt(ordered_dot(w, w, comm));
      for (int i = 0; i < k; ++i) {
        const double a = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = a;
      }
      const double rho = std::hypot(h(k, k), h(k + 1, k));
      if (rho == 0.0) {
        ++k;
        break;
      }
      cs[k] = h(k, k) / rho;
      sn[k] = h(k + 1, k) / rho;
      const double hk1 = h(k + 1, k);
      h(k, k) = rho;
      h(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      const bool breakdown = !(hk1 > 0.0);
      if (!breakdown) {
        v.push_back(w);
        for (auto& e : v.back()) e /= hk1;
      }
      if (std::abs(g[k + 1]) <= target || breakdown) {
        ++k;
        break;
      }
    }
    // Back substitution on the k x k triangle.
    std::vector<double> ycoef(k, 0.0);
    for (int i = k - 1; i >= 0; --i) {
      double acc = g[i];
      for (int j = i + 1; j < k; ++j) acc -= h(i, j) * ycoef[j];
      ycoef[i] = h(i, i) != 0.0 ? acc / h(i, i) : 0.0;
    }
    for (int i = 0; i < k; ++i) {
      for (std::size_t t = 0; t < n; ++t) x[t] += ycoef[i] * v[i][t];
    }
  }
  auto ax = apply(x);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ax[i];
  out.converged = std::sqrt(ordered_dot(r, r, comm)) <= target;
  return out;
}

double merit(const LcpSystem& system, const std::vector<double>& lambda, comm::Communicator& comm,
             double* inf_norm) {
  const auto b = lcp_matvec(system, lambda, comm);
  std::vector<double> h(lambda.size());
  double r = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    h[i] = std::min(lambda[i], system.q[i] + b[i]);
    r = std::max(r, std::abs(h[i]));
  }
  if (inf_norm) *inf_norm = global_max(r, comm);
  return 0.5 * ordered_dot(h, h, comm);
}

}  // namespace

LcpResult solve_lcp(const LcpSystem& system, const LcpOptions& options, comm::Communicator& comm) {
  const std::size_t n = system.local_size();
  LcpResult res;
  res.lambda.assign(n, 0.0);
  constexpr double kArmijo = 1e-4;
  constexpr double kMinStep = 1.0 / (1 << 30);

  double inf_norm = 0.0;
  double phi = merit(system, res.lambda, comm, &inf_norm);
  for (;;) {
    res.residual = inf_norm;
    if (inf_norm <= options.tol) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= options.max_iter) return res;
    ++res.iterations;

    const auto b = lcp_matvec(system, res.lambda, comm);
    std::vector<char> active(n, 0);
    std::vector<double> free_part(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      active[i] = system.q[i] + b[i] < res.lambda[i];
      if (!active[i]) free_part[i] = res.lambda[i];
    }
    // Active rows: B_AA d_A = -y_A + B_AF lambda_F; free rows: d_F = -lambda_F.
    const auto bf = lcp_matvec(system, free_part, comm);
    std::vector<double> rhs(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) rhs[i] = -(system.q[i] + b[i]) + bf[i];
    }
    std::vector<double> d(n, 0.0);
    res.gmres_iterations += masked_gmres(system, active, rhs, d, options, comm).iterations;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) d[i] = -res.lambda[i];
    }

    double t = 1.0;
    std::vector<double> trial(n);
    double trial_phi = 0.0, trial_inf = 0.0;
    bool accepted = false;
    while (t >= kMinStep) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = std::max(0.0, res.lambda[i] + t * d[i]);
      trial_phi = merit(system, trial, comm, &trial_inf);
      if (trial_phi <= (1.0 - 2.0 * kArmijo * t) * phi) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Take the full projected Newton step; the merit function is not
      // smooth at active-set changes and a short step can stall there.
      ++res.line_search_failures;
      for (std::size_t i = 0; i < n; ++i) trial[i] = std::max(0.0, res.lambda[i] + d[i]);
      trial_phi = merit(system, trial, comm, &trial_inf);
    }
    res.lambda = trial;
    phi = trial_phi;
    inf_norm = trial_inf;
  }
}

NcpReport resolve_contacts_ncp(std::vector<MeshBody>& local, ForceMap& contact_force,
                               const StepOperator& step_op, const ContactParams& params,
                               const NcpOptions& options, comm::Communicator& comm) {
  NcpReport report;
  for (const auto& b : local) {
    auto& f = contact_force[b.global_id];
    if (f.size() != b.vertex_count()) f.assign(b.vertex_count(), Vec3::Zero());
  }
  auto detection = compute_contact_volumes(local, params, comm);
  report.first_detection = detection.stats;
  for (;;) {
    report.total_volume.push_back(detection.stats.total_value);
    report.max_volume = detection.stats.max_value;
    if (detection.stats.volumes == 0 || detection.stats.max_value <= options.ncp_tol) {
      report.converged = true;
      return report;
    }
    if (report.iterations >= options.max_iterations) {
      throw NcpFailure("contact resolution did not converge in " + std::to_string(options.max_iterations) +
                       " iterations (max volume " + std::to_string(detection.stats.max_value) + ")");
    }
    ++report.iterations;

    const auto system = assemble_lcp_matrix(detection, local, step_op, comm);
    const auto lcp = solve_lcp(system, options.lcp, comm);
    report.newton_iterations += lcp.iterations;

    // Contact force -g^T lambda per vertex, then the displacement it causes.
    std::set<std::int64_t> needed;
    for (const auto& b : local) {
      for (const auto& c : detection.jacobian.at(b.global_id)) {
        if (c.volume >= 0) needed.insert(c.volume);
      }
    }
    const std::vector<std::int64_t> wanted(needed.begin(), needed.end());
    const auto values = fetch_entries(system.rank_offsets, lcp.lambda, wanted, comm);
    std::vector<std::vector<Vec3>> forces(local.size()), disps(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) {
      const auto& b = local[i];
      const auto& cols = detection.jacobian.at(b.global_id);
      std::vector<Vec3> force(b.vertex_count(), Vec3::Zero());
      bool any = false;
      for (std::size_t v = 0; v < cols.size(); ++v) {
        if (cols[v].volume < 0) continue;
        const auto it = std::lower_bound(wanted.begin(), wanted.end(), cols[v].volume);
        const double lam = values[static_cast<std::size_t>(it - wanted.begin())];
        force[v] = -lam * cols[v].grad;
        any = any || lam != 0.0;
      }
      if (!any) continue;
      disps[i] = step_op.apply(b, force);
      forces[i] = std::move(force);
    }

    // The linearization can overshoot into configurations with more volume
    // than before; shorten the step until the total volume decreases.
    std::vector<std::vector<Vec3>> start(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) start[i] = local[i].vertices1;
    const double v0 = detection.stats.total_value;
    double alpha = 1.0;
    for (int k = 0;; ++k) {
      for (std::size_t i = 0; i < local.size(); ++i) {
        if (disps[i].empty()) continue;
        for (std::size_t v = 0; v < local[i].vertex_count(); ++v) {
          local[i].vertices1[v] = start[i][v] + alpha * disps[i][v];
        }
      }
      detection = compute_contact_volumes(local, params, comm);
      if (detection.stats.total_value <= (1.0 - options.armijo * alpha) * v0 || k >= options.max_backtracks) break;
      alpha *= 0.5;
      ++report.backtracks;
    }

    double lambda_sum = 0.0;
    for (double v : comm.allgatherv(lcp.lambda)) lambda_sum += v;
    report.total_lambda += alpha * lambda_sum;
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (forces[i].empty()) continue;
      auto& acc = contact_force.at(local[i].global_id);
      for (std::size_t v = 0; v < local[i].vertex_count(); ++v) acc[v] += alpha * forces[i][v];
    }
  }
}

}  // namespace stiv
