#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "stiv/comm.hpp"
#include "stiv/geometry.hpp"
#include "stiv/narrowphase.hpp"

namespace stiv {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contact resolution did not reach the requested accuracy within its
/// iteration cap. The step must be rejected.
class NcpFailure : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Linear map from per-vertex forces on one body to that body's step
/// displacement (the block A^-1 G). Implementations must be symmetric
/// positive semidefinite on the body's vertex force space.
class StepOperator {
 public:
  virtual ~StepOperator() = default;
  virtual std::vector<Vec3> apply(const MeshBody& body, const std::vector<Vec3>& forces) const = 0;
};

/// Row-distributed sparse LCP  0 <= q + B lambda  _|_  lambda >= 0.
/// Rows (and entries of q and lambda) are owned by contiguous index ranges.
struct LcpSystem {
  std::int64_t dim = 0;
  std::vector<std::int64_t> rank_offsets;  // size P + 1
  std::int64_t row_begin = 0;
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows;  // owned rows, ascending columns
  std::vector<double> q;                                           // owned entries

  // Communication plan for products with B, built collectively.
  std::vector<std::int64_t> remote_columns;           // ascending, referenced but not owned
  std::map<int, std::vector<std::int64_t>> send_plan;  // rank -> owned local offsets it needs

  std::size_t local_size() const { return q.size(); }
};

/// Builds the system from locally owned rows given as (row, col, value)
/// triplets already summed; fills the communication plan (collective).
LcpSystem make_lcp_system(std::int64_t dim, std::vector<std::int64_t> rank_offsets,
                          std::vector<std::vector<std::pair<std::int64_t, double>>> rows,
                          std::vector<double> q, comm::Communicator& comm);

/// Block-distributes a dense system given identically on every rank.
LcpSystem distribute_lcp(const Eigen::MatrixXd& b, const Eigen::VectorXd& q,
                         comm::Communicator& comm);

/// B(j,k) = sum over bodies i of g_j . (A^-1 G)_i g_k with g the constraint
/// gradients restricted to body i; q = -V. Contributions are summed on the
/// owner of row j in (j, k, body) order.
LcpSystem assemble_lcp_matrix(const ContactDetection& detection, const std::vector<MeshBody>& local,
                              const StepOperator& step_op, comm::Communicator& comm);

/// y = B x for x distributed like the rows (collective).
std::vector<double> lcp_matvec(const LcpSystem& system, const std::vector<double>& x,
                               comm::Communicator& comm);

/// Values of a row-distributed vector at the requested global indices
/// (collective; `wanted` ascending).
std::vector<double> fetch_entries(const std::vector<std::int64_t>& rank_offsets,
                                  const std::vector<double>& local,
                                  const std::vector<std::int64_t>& wanted, comm::Communicator& comm);

/// Sum of x.y in global index order (collective, rank-count invariant).
double ordered_dot(const std::vector<double>& x, const std::vector<double>& y,
                   comm::Communicator& comm);

struct LcpOptions {
  double tol = 1e-10;  // on ||min(lambda, q + B lambda)||_inf
  int max_iter = 200;
  double gmres_tol = 1e-8;  // relative
  int gmres_restart = 50;
  int gmres_max_iter = 2000;
  double shift = 1e-12;  // diagonal regularization of the active block
};

struct LcpResult {
  std::vector<double> lambda;  // owned entries
  bool converged = false;
  int iterations = 0;
  int gmres_iterations = 0;
  int line_search_failures = 0;
  double residual = 0.0;
};

/// Minimum-map Newton. Each step solves the active block of B by restarted
/// GMRES and takes a projected Armijo step on 0.5 ||min(lambda, q + B lambda)||^2.
LcpResult solve_lcp(const LcpSystem& system, const LcpOptions& options, comm::Communicator& comm);

/// ||min(lambda, q + B lambda)||_inf (collective).
double min_map_residual(const LcpSystem& system, const std::vector<double>& lambda,
                        comm::Communicator& comm);

struct NcpOptions {
  double ncp_tol = 1e-10;  // accept when every volume value is at most this
  int max_iterations = 50;
  // Backtracking on each update: halve the step until the total volume
  // drops by the Armijo fraction, at most this many times.
  int max_backtracks = 6;
  double armijo = 1e-4;
  LcpOptions lcp;
};

struct NcpReport {
  int iterations = 0;        // LCP solves performed
  int newton_iterations = 0;  // summed over the LCP solves
  bool converged = false;
  std::vector<double> total_volume;  // per detection pass, in order
  double max_volume = 0.0;           // of the final detection pass
  double total_lambda = 0.0;
  int backtracks = 0;  // step halvings summed over the passes
  NarrowphaseStats first_detection;
};

/// Contact force per local body and vertex.
using ForceMap = std::map<std::int64_t, std::vector<Vec3>>;

/// Repeats detect / assemble / solve / update on the candidate positions
/// (vertices1) of the local bodies until no volume exceeds ncp_tol, and
/// accumulates the contact forces. Throws NcpFailure at the iteration cap.
NcpReport resolve_contacts_ncp(std::vector<MeshBody>& local, ForceMap& contact_force,
                               const StepOperator& step_op, const ContactParams& params,
                               const NcpOptions& options, comm::Communicator& comm);

}  // namespace stiv
