#pragma once

// Distributed solver for the cooperative formulation: one worker per CF-LCC
// subsystem performing the three-step splitting iteration with pre-factorized
// solves. Neighbouring workers exchange two N-vectors per iteration over an
// in-process bus:
//   forward  (i -> i+1): the dual-adjusted tail-velocity plan of subsystem i,
//   backward (i+1 -> i): the reference row image of the fresh weights of i+1.
// The bus can replay messages with a configurable delay (in control steps) to
// model imperfect V2X conditions; workers fall back to the newest message old
// enough, or zero vectors before any traffic exists.

#include <atomic>
#include <barrier>
#include <chrono>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cooperative.hpp"
#include "qp.hpp"
#include "types.hpp"

namespace deeplcc {

struct CommPolicy {
  int max_iterations = 300;
  int delay_steps = 0;     // 0 = ideal synchronous exchange
  double delta_abs = 0.1;
  double delta_rel = 1e-3;
  bool parallel = true;    // run workers of one round on a thread pool
};

struct Message {
  enum class Kind { Forward, Backward };
  Kind kind;
  int sender = 0;
  long control_step = 0;
  int iteration = 0;
  Vec payload;
};

// Keeps the final message of each control step per directed edge so delayed
// consumers can read the newest message at least `delay` steps old.
class MessageBus {
 public:
  explicit MessageBus(int n_subsystems)
      : forward_history_(n_subsystems), backward_history_(n_subsystems) {}

  void publish(const Message& m) {
    auto& hist = history(m.kind, m.sender);
    if (!hist.empty() && hist.back().first == m.control_step) {
      hist.back().second = m.payload;  // final message of the step wins
    } else {
      hist.push_back({m.control_step, m.payload});
      if (hist.size() > 64) hist.pop_front();
    }
    ++messages_sent_;
  }

  // Newest payload with control_step <= step - delay; zeros when none exists.
  Vec fetch_delayed(Message::Kind kind, int sender, long step, int delay, int dim) const {
    const auto& hist = history(kind, sender);
    for (auto it = hist.rbegin(); it != hist.rend(); ++it) {
      if (it->first <= step - delay) return it->second;
    }
    return Vec::Zero(dim);
  }

  long messages_sent() const { return messages_sent_; }

 private:
  using History = std::deque<std::pair<long, Vec>>;
  History& history(Message::Kind k, int sender) {
    return k == Message::Kind::Forward ? forward_history_.at(sender)
                                       : backward_history_.at(sender);
  }
  const History& history(Message::Kind k, int sender) const {
    return k == Message::Kind::Forward ? forward_history_.at(sender)
                                       : backward_history_.at(sender);
  }
  std::vector<History> forward_history_;
  std::vector<History> backward_history_;
  long messages_sent_ = 0;
};

// Pre-factorized operators of one subsystem (fixed for the whole run): the
// saddle-point factor of the weight update and the copy-update solve.
struct SubsystemFactors {
  Mat h_gi;                      // quadratic coefficient of the weight update
  std::optional<KktFactor> psi;  // factor of [[H_gi, A'],[A, 0]]
  Eigen::LLT<Mat> hz;            // copy-update coefficient (absent for the last subsystem)
  bool hz_identity = false;      // last subsystem: z+ = g+ + mu/rho
};

inline SubsystemFactors prefactor(const SubsystemProblem& sub, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("prefactor: rho must be positive");
  SubsystemFactors f;
  const int n = sub.g_dim();
  f.h_gi = sub.cost_quad +
           0.5 * rho *
               (Mat::Identity(n, n) + sub.spacing_rows.transpose() * sub.spacing_rows +
                sub.blocks.u_future.transpose() * sub.blocks.u_future);
  if (!sub.is_head()) {
    // successors carry the reference-coupling rows in the penalty instead
    f.h_gi += 0.5 * rho * sub.blocks.e_future.transpose() * sub.blocks.e_future;
  }
  f.psi.emplace(f.h_gi, sub.eq_mat);
  if (sub.has_successor()) {
    const Mat hz = 0.5 * rho *
                   (Mat::Identity(n, n) + sub.tail_vel_rows.transpose() * sub.tail_vel_rows);
    f.hz.compute(hz);
    if (f.hz.info() != Eigen::Success) {
      throw std::runtime_error("prefactor: copy-update coefficient not positive definite");
    }
  } else {
    f.hz_identity = true;
  }
  return f;
}

// Primal/dual iterates of one subsystem.
struct AdmmIterate {
  Vec g, z, s, u;              // weights, consensus copy, spacing errors, inputs
  Vec mu, eta, phi, theta;     // duals: consensus, coupling, spacing, input
  Vec g_new, z_new, s_new, u_new;

  void init_zero(int g_dim, int horizon, bool has_successor) {
    g = Vec::Zero(g_dim);
    z = Vec::Zero(g_dim);
    s = Vec::Zero(horizon);
    u = Vec::Zero(horizon);
    mu = Vec::Zero(g_dim);
    eta = has_successor ? Vec::Zero(horizon) : Vec();
    phi = Vec::Zero(horizon);
    theta = Vec::Zero(horizon);
    g_new = g;
    z_new = z;
    s_new = s;
    u_new = u;
  }
};

// Forward message: eta_i - rho * K_i Y_f z_i.
inline Vec forward_message(const SubsystemProblem& sub, const AdmmIterate& it, double rho) {
  return it.eta - rho * (sub.tail_vel_rows * it.z);
}

// Step 1: minimize the augmented Lagrangian over the weights on the equality
// domain via the pre-factorized saddle-point solve.
inline Vec update_weights(const SubsystemProblem& sub, const SubsystemFactors& fac,
                          const AdmmIterate& it, const Vec* fwd_from_predecessor,
                          double rho) {
  Vec q = sub.cost_lin;
  q += 0.5 * (it.mu - rho * it.z);
  q -= 0.5 * (sub.spacing_rows.transpose() * (it.phi + rho * it.s));
  q -= 0.5 * (sub.blocks.u_future.transpose() * (it.theta + rho * it.u));
  if (!sub.is_head()) {
    if (fwd_from_predecessor == nullptr) {
      throw std::invalid_argument("update_weights: missing forward message");
    }
    q += 0.5 * (sub.blocks.e_future.transpose() * *fwd_from_predecessor);
  }
  return fac.psi->solve_eq(q, sub.eq_rhs);
}

// Step 2: copy update (linear solve) and the two box projections.
inline void update_copy_and_boxes(const SubsystemProblem& sub, const SubsystemFactors& fac,
                                  AdmmIterate& it, const Vec* bwd_from_successor,
                                  double rho) {
  if (fac.hz_identity) {
    it.z_new = it.g_new + it.mu / rho;
  } else {
    if (bwd_from_successor == nullptr) {
      throw std::invalid_argument("update_copy_and_boxes: missing backward message");
    }
    Vec rhs = 0.5 * it.mu + 0.5 * rho * it.g_new;
    rhs += sub.tail_vel_rows.transpose() * (0.5 * it.eta + 0.5 * rho * *bwd_from_successor);
    it.z_new = fac.hz.solve(rhs);
  }
  it.s_new = clamp(Vec(sub.spacing_rows * it.g_new - it.phi / rho),
                   sub.bounds.s_err_min, sub.bounds.s_err_max);
  it.u_new = clamp(Vec(sub.blocks.u_future * it.g_new - it.theta / rho),
                   sub.bounds.a_min, sub.bounds.a_max);
}

// Step 3: dual ascent on the four constraint groups.
inline void update_duals(const SubsystemProblem& sub, AdmmIterate& it,
                         const Vec* bwd_from_successor, double rho) {
  it.mu += rho * (it.g_new - it.z_new);
  if (sub.has_successor()) {
    it.eta += rho * (*bwd_from_successor - sub.tail_vel_rows * it.z_new);
  }
  it.phi += rho * (it.s_new - sub.spacing_rows * it.g_new);
  it.theta += rho * (it.u_new - sub.blocks.u_future * it.g_new);
}

struct ResidualReport {
  double r_pri[4] = {0, 0, 0, 0};
  double r_dual[4] = {0, 0, 0, 0};
  double tol_pri[4] = {0, 0, 0, 0};
  double tol_dual[4] = {0, 0, 0, 0};
  bool converged = false;
};

struct AdmmStepStats {
  int iterations = 0;
  double wall_ms = 0.0;
  double max_worker_ms = 0.0;
  long messages = 0;
  ResidualReport residuals;
  std::vector<double> r_pri_trace;   // max over the four groups, per iteration
  std::vector<double> r_dual_trace;
};

struct AdmmStepResult {
  Vec u_apply;                // first input sample per subsystem
  std::vector<Vec> u_pred;    // projected input sequences
  std::vector<Vec> y_pred;    // Y_f g per subsystem
  AdmmStepStats stats;
};

namespace detail {

// Barrier-synchronized worker pool reused across all phases of a control
// step. Each phase distributes the subsystem indices over the pool; work on
// index i touches only subsystem i's data, so results are identical to the
// serial order.
class PhaseRunner {
 public:
  PhaseRunner(int n_items, bool parallel) : n_(n_items) {
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    helpers_ = (!parallel || n_items < 2 || hw < 2) ? 0 : std::min(n_items, hw) - 1;
    if (helpers_ > 0) {
      barrier_.emplace(helpers_ + 1);
      threads_.reserve(helpers_);
      for (int w = 0; w < helpers_; ++w) {
        threads_.emplace_back([this] { helper_loop(); });
      }
    }
  }

  PhaseRunner(const PhaseRunner&) = delete;
  PhaseRunner& operator=(const PhaseRunner&) = delete;

  ~PhaseRunner() {
    if (helpers_ > 0) {
      stop_ = true;
      barrier_->arrive_and_wait();
      for (auto& t : threads_) t.join();
    }
  }

  void run(std::function<void(int)> f) {
    if (helpers_ == 0) {
      for (int i = 0; i < n_; ++i) f(i);
      return;
    }
    fn_ = std::move(f);
    next_.store(0, std::memory_order_relaxed);
    barrier_->arrive_and_wait();
    drain();
    barrier_->arrive_and_wait();
    if (error_) {
      auto e = error_;
      error_ = nullptr;
      std::rethrow_exception(e);
    }
  }

 private:
  void helper_loop() {
    while (true) {
      barrier_->arrive_and_wait();
      if (stop_) return;
      drain();
      barrier_->arrive_and_wait();
    }
  }

  void drain() {
    int i;
    while ((i = next_.fetch_add(1)) < n_) {
      try {
        fn_(i);
      } catch (...) {
        std::scoped_lock lock(error_mutex_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  int n_;
  int helpers_ = 0;
  std::atomic<int> next_{0};
  std::atomic<bool> stop_{false};
  std::function<void(int)> fn_;
  std::optional<std::barrier<>> barrier_;
  std::vector<std::thread> threads_;
  std::mutex error_mutex_;
  std::exception_ptr error_;
};

}  // namespace detail

// The receding-horizon distributed solver. Iterates are carried across
// control steps as warm starts; fresh past trajectories enter through the
// per-step right-hand sides only.
class DistributedSolver {
 public:
  DistributedSolver(std::vector<SubsystemProblem> subs, double rho, CommPolicy policy)
      : subs_(std::move(subs)), rho_(rho), policy_(policy),
        bus_(static_cast<int>(subs_.size())) {
    const int n = static_cast<int>(subs_.size());
    if (n == 0) throw std::invalid_argument("DistributedSolver: no subsystems");
    factors_.reserve(n);
    iterates_.resize(n);
    for (int i = 0; i < n; ++i) {
      factors_.push_back(prefactor(subs_[i], rho_));
      iterates_[i].init_zero(subs_[i].g_dim(), subs_[i].horizon(),
                             subs_[i].has_successor());
    }
  }

  int n_subsystems() const { return static_cast<int>(subs_.size()); }
  const std::vector<SubsystemProblem>& subsystems() const { return subs_; }
  const std::vector<AdmmIterate>& iterates() const { return iterates_; }
  long total_messages() const { return bus_.messages_sent(); }

  // One control step: install the new past trajectories, iterate the three
  // splitting steps until the stopping rule fires or the round budget is
  // exhausted, and return the first input sample of every subsystem.
  AdmmStepResult step(const std::vector<Vec>& u_ini, const std::vector<Vec>& eps_ini,
                      const std::vector<Vec>& y_ini) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = n_subsystems();
    const int horizon = subs_[0].horizon();
    for (int i = 0; i < n; ++i) subs_[i].set_past(u_ini.at(i), eps_ini.at(i), y_ini.at(i));

    // Under delay, the whole step consumes the snapshot from `delay` steps ago.
    std::vector<Vec> stale_fwd(n), stale_bwd(n);
    if (policy_.delay_steps > 0) {
      for (int i = 0; i + 1 < n; ++i) {
        stale_fwd[i] = bus_.fetch_delayed(Message::Kind::Forward, i, step_index_,
                                          policy_.delay_steps, horizon);
      }
      for (int i = 1; i < n; ++i) {
        stale_bwd[i] = bus_.fetch_delayed(Message::Kind::Backward, i, step_index_,
                                          policy_.delay_steps, horizon);
      }
    }

    AdmmStepStats stats;
    const long messages_before = bus_.messages_sent();
    std::vector<Vec> fresh_fwd(n), fresh_bwd(n);
    std::vector<double> worker_ms(n, 0.0);
    std::vector<Vec> z_prev(n), s_prev(n), u_prev(n);
    detail::PhaseRunner runner(n, policy_.parallel);

    int iter = 0;
    for (; iter < policy_.max_iterations; ++iter) {
      for (int i = 0; i < n; ++i) {
        z_prev[i] = iterates_[i].z;
        s_prev[i] = iterates_[i].s;
        u_prev[i] = iterates_[i].u;
      }
      runner.run([&](int i) {
        const auto w0 = std::chrono::steady_clock::now();
        if (subs_[i].has_successor()) {
          fresh_fwd[i] = forward_message(subs_[i], iterates_[i], rho_);
        }
        worker_ms[i] += std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - w0)
                            .count();
      });
      for (int i = 0; i + 1 < n; ++i) {
        bus_.publish({Message::Kind::Forward, i, step_index_, iter, fresh_fwd[i]});
      }

      runner.run([&](int i) {
        const auto w0 = std::chrono::steady_clock::now();
        const Vec* fwd = nullptr;
        if (!subs_[i].is_head()) {
          fwd = policy_.delay_steps > 0 ? &stale_fwd[i - 1] : &fresh_fwd[i - 1];
        }
        iterates_[i].g_new = update_weights(subs_[i], factors_[i], iterates_[i], fwd, rho_);
        if (!subs_[i].is_head()) {
          fresh_bwd[i] = subs_[i].blocks.e_future * iterates_[i].g_new;
        }
        worker_ms[i] += std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - w0)
                            .count();
      });
      for (int i = 1; i < n; ++i) {
        bus_.publish({Message::Kind::Backward, i, step_index_, iter, fresh_bwd[i]});
      }

      runner.run([&](int i) {
        const auto w0 = std::chrono::steady_clock::now();
        const Vec* bwd = nullptr;
        if (subs_[i].has_successor()) {
          bwd = policy_.delay_steps > 0 ? &stale_bwd[i + 1] : &fresh_bwd[i + 1];
        }
        update_copy_and_boxes(subs_[i], factors_[i], iterates_[i], bwd, rho_);
        update_duals(subs_[i], iterates_[i], bwd, rho_);
        iterates_[i].g = iterates_[i].g_new;
        iterates_[i].z = iterates_[i].z_new;
        iterates_[i].s = iterates_[i].s_new;
        iterates_[i].u = iterates_[i].u_new;
        worker_ms[i] += std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - w0)
                            .count();
      });

      const ResidualReport rep = residuals(z_prev, s_prev, u_prev, fresh_bwd, stale_bwd);
      double rp = 0.0, rd = 0.0;
      for (int k = 0; k < 4; ++k) {
        rp = std::max(rp, rep.r_pri[k]);
        rd = std::max(rd, rep.r_dual[k]);
      }
      stats.r_pri_trace.push_back(rp);
      stats.r_dual_trace.push_back(rd);
      stats.residuals = rep;
      if (rep.converged) {
        ++iter;
        break;
      }
    }

    stats.iterations = iter;
    stats.messages = bus_.messages_sent() - messages_before;
    for (int i = 0; i < n; ++i) stats.max_worker_ms = std::max(stats.max_worker_ms, worker_ms[i]);
    stats.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    AdmmStepResult out;
    out.stats = std::move(stats);
    out.u_apply.resize(n);
    out.u_pred.resize(n);
    out.y_pred.resize(n);
    for (int i = 0; i < n; ++i) {
      out.u_apply(i) = iterates_[i].u(0);
      out.u_pred[i] = iterates_[i].u;
      out.y_pred[i] = subs_[i].blocks.y_future * iterates_[i].g;
    }
    ++step_index_;
    return out;
  }

 private:
  // Appendix-style stopping rule: grouped primal/dual residual sums against
  // absolute + relative tolerances. Cross-subsystem products are evaluated
  // here, on the coordinator, from the workers' published state.
  ResidualReport residuals(const std::vector<Vec>& z_prev, const std::vector<Vec>& s_prev,
                           const std::vector<Vec>& u_prev, const std::vector<Vec>& fresh_bwd,
                           const std::vector<Vec>& stale_bwd) const {
    ResidualReport rep;
    const int n = n_subsystems();
    const double dabs = policy_.delta_abs;
    const double drel = policy_.delta_rel;
    for (int i = 0; i < n; ++i) {
      const AdmmIterate& it = iterates_[i];
      const SubsystemProblem& s = subs_[i];
      const double sq_g = std::sqrt(static_cast<double>(s.g_dim()));
      const double sq_n = std::sqrt(static_cast<double>(s.horizon()));

      rep.r_pri[0] += (it.g - it.z).norm();
      rep.tol_pri[0] += sq_g * dabs + drel * std::max(it.g.norm(), it.z.norm());
      rep.r_dual[0] += rho_ * (it.z - z_prev[i]).norm();
      rep.tol_dual[0] += sq_g * dabs + drel * it.mu.norm();

      if (s.has_successor()) {
        const Vec& coupled =
            policy_.delay_steps > 0 ? stale_bwd[i + 1] : fresh_bwd[i + 1];
        const Vec tail_plan = s.tail_vel_rows * it.z;
        rep.r_pri[1] += (coupled - tail_plan).norm();
        rep.tol_pri[1] += sq_n * dabs + drel * std::max(coupled.norm(), tail_plan.norm());
        const Vec dz_img = s.tail_vel_rows * (it.z - z_prev[i]);
        rep.r_dual[1] += rho_ * (subs_[i + 1].blocks.e_future.transpose() * dz_img).norm();
        rep.tol_dual[1] +=
            std::sqrt(static_cast<double>(subs_[i + 1].g_dim())) * dabs +
            drel * (subs_[i + 1].blocks.e_future.transpose() * it.eta).norm();
      }

      const Vec spacing_plan = s.spacing_rows * it.g;
      rep.r_pri[2] += (it.s - spacing_plan).norm();
      rep.tol_pri[2] += sq_n * dabs + drel * std::max(it.s.norm(), spacing_plan.norm());
      rep.r_dual[2] += rho_ * (s.spacing_rows.transpose() * (it.s - s_prev[i])).norm();
      rep.tol_dual[2] += sq_g * dabs + drel * (s.spacing_rows.transpose() * it.phi).norm();

      const Vec input_plan = s.blocks.u_future * it.g;
      rep.r_pri[3] += (it.u - input_plan).norm();
      rep.tol_pri[3] += sq_n * dabs + drel * std::max(it.u.norm(), input_plan.norm());
      rep.r_dual[3] += rho_ * (s.blocks.u_future.transpose() * (it.u - u_prev[i])).norm();
      rep.tol_dual[3] += sq_g * dabs + drel * (s.blocks.u_future.transpose() * it.theta).norm();
    }
    rep.converged = true;
    for (int k = 0; k < 4; ++k) {
      if (rep.r_pri[k] > rep.tol_pri[k] || rep.r_dual[k] > rep.tol_dual[k]) {
        rep.converged = false;
      }
    }
    return rep;
  }

  std::vector<SubsystemProblem> subs_;
  double rho_;
  CommPolicy policy_;
  MessageBus bus_;
  std::vector<SubsystemFactors> factors_;
  std::vector<AdmmIterate> iterates_;
  long step_index_ = 0;
};

}  // namespace deeplcc
