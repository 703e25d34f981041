#include "monoplot/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "monoplot/error.hpp"

namespace monoplot {

namespace {

// Image GCPs closer than this to their projection count as coincident.
constexpr double kCoincidentPx = 1e-9;

}  // namespace

void OptimizerSchedule::validate() const {
  if (max_iters < 0) throw InputError("max_iters must be >= 0");
  if (!(step_translation > 0.0 && step_angle > 0.0 && step_fov > 0.0)) {
    throw InputError("step sizes must be positive");
  }
  if (!(lambda_0 >= 0.0 && lambda_0 <= 1.0)) throw InputError("lambda_0 must lie in [0, 1]");
  if (!(lambda_rule.s_ref > 0.0)) throw InputError("s_ref must be positive");
  if (!(convergence_tol > 0.0)) throw InputError("convergence_tol must be positive");
  if (patience < 1) throw InputError("patience must be >= 1");
  if (restarts < 0) throw InputError("restarts must be >= 0");
}

void RegistrationProblem::validate() const {
  if (image_gcps.empty()) throw InputError("no selected image GCPs");
  if (world_gcps.empty()) throw InputError("no selected DEM GCPs");
  if (image.width < 1 || image.height < 1) throw InputError("image size must be positive");
  initial_camera.validate();
  schedule.validate();
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIters:
      return "max-iters";
    case SolveStatus::kDegenerate:
      return "degenerate";
  }
  return "degenerate";
}

SolveStatus solve_status_from_string(const std::string& s) {
  if (s == "converged") return SolveStatus::kConverged;
  if (s == "max-iters") return SolveStatus::kMaxIters;
  if (s == "degenerate") return SolveStatus::kDegenerate;
  throw InputError("unknown solve status '" + s + "'");
}

std::optional<ChamferResult> chamfer_loss(std::span<const Eigen::Vector2d> image_gcps,
                                          std::span<const Eigen::Vector2d> projected) {
  if (projected.empty() || image_gcps.empty()) return std::nullopt;

  // Sweep over projected points sorted by x; a side stops once the x gap
  // alone exceeds the best squared distance.
  std::vector<std::size_t> order(projected.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return projected[a].x() < projected[b].x() ||
           (projected[a].x() == projected[b].x() && a < b);
  });

  ChamferResult res;
  res.nearest.resize(image_gcps.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < image_gcps.size(); ++i) {
    const Eigen::Vector2d& q = image_gcps[i];
    const auto pos = std::lower_bound(order.begin(), order.end(), q.x(),
                                      [&](std::size_t idx, double x) { return projected[idx].x() < x; });
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = std::numeric_limits<std::size_t>::max();
    auto consider = [&](std::size_t idx) {
      const double dx = q.x() - projected[idx].x();
      const double dy = q.y() - projected[idx].y();
      if (dx * dx > best) return false;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best || (d2 == best && idx < best_idx)) {
        best = d2;
        best_idx = idx;
      }
      return true;
    };
    for (auto it = pos; it != order.end(); ++it) {
      if (!consider(*it)) break;
    }
    for (auto it = pos; it != order.begin();) {
      --it;
      if (!consider(*it)) break;
    }
    res.nearest[i] = best_idx;
    sum += std::sqrt(best);
  }
  res.value = sum / static_cast<double>(image_gcps.size());
  return res;
}

namespace {

Eigen::Vector2d centroid(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

}  // namespace

double centroid_regularizer(std::span<const Eigen::Vector2d> image_gcps,
                            std::span<const Eigen::Vector2d> projected) {
  if (image_gcps.empty() || projected.empty()) {
    throw Error("centroid_regularizer requires non-empty point sets");
  }
  const Eigen::Vector2d d = centroid(projected) - centroid(image_gcps);
  return d.x() * d.x() + d.y() * d.y();
}

double adapt_lambda(double s, double lambda_0, const LambdaRule& rule) {
  if (!rule.adaptive) return lambda_0;
  return lambda_0 * s / (s + rule.s_ref);
}

double Evaluation::objective(double lambda) const {
  if (degenerate) return kDegenerateObjective + r;
  return (1.0 - lambda) * s + lambda * r;
}

CameraParams::Vector Evaluation::gradient(double lambda) const {
  if (degenerate) return grad_r;
  return (1.0 - lambda) * grad_s + lambda * grad_r;
}

Evaluation evaluate(const CameraParams& cam, const RegistrationProblem& problem) {
  using Jacobian = Eigen::Matrix<double, 2, CameraParams::kDim>;

  const double cy = std::cos(cam.yaw), sy = std::sin(cam.yaw);
  const double cp = std::cos(cam.pitch), sp = std::sin(cam.pitch);
  const double cr = std::cos(cam.roll), sr = std::sin(cam.roll);
  Eigen::Matrix3d ry, rx, rz, dry, drx, drz;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rx << 1, 0, 0, 0, cp, -sp, 0, sp, cp;
  rz << cr, -sr, 0, sr, cr, 0, 0, 0, 1;
  dry << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
  drx << 0, 0, 0, 0, -sp, -cp, 0, cp, -sp;
  drz << -sr, -cr, 0, cr, -sr, 0, 0, 0, 0;
  const Eigen::Matrix3d rot = rz * rx * ry;
  const Eigen::Matrix3d d_yaw = rz * rx * dry;
  const Eigen::Matrix3d d_pitch = rz * drx * ry;
  const Eigen::Matrix3d d_roll = drz * rx * ry;

  const ImageSize size = problem.image;
  const Intrinsics intr = problem.intrinsics(cam.fov);
  const double half_fov_sin = std::sin(cam.fov / 2.0);
  const double df_dfov = -(size.width / 4.0) / (half_fov_sin * half_fov_sin);
  const double margin = kFrameMargin * std::max(size.width, size.height);

  const std::size_t m = problem.world_gcps.size();
  std::vector<Eigen::Vector2d> pixels(m);
  std::vector<Jacobian> jacobians(m);
  Evaluation ev;
  ev.visibility.assign(m, false);
  std::vector<bool> front(m, false);

  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::Vector3d pt = problem.world_gcps[j].vec() + cam.t;
    const Eigen::Vector3d q = rot * pt;
    if (q.z() <= kMinDepth) continue;
    front[j] = true;
    ++ev.in_front;
    const double iz = 1.0 / q.z();
    const double xn = q.x() * iz;
    const double yn = q.y() * iz;
    // Same arithmetic as project() so both report identical pixels.
    pixels[j] = {intr.fx * q.x() / q.z() + intr.cx, intr.fy * q.y() / q.z() + intr.cy};
    ev.visibility[j] = pixels[j].x() >= -margin && pixels[j].x() <= size.width + margin &&
                       pixels[j].y() >= -margin && pixels[j].y() <= size.height + margin;
    if (ev.visibility[j]) ++ev.visible;

    Eigen::Matrix<double, 2, 3> dpix_dq;
    dpix_dq << intr.fx * iz, 0.0, -intr.fx * xn * iz, 0.0, intr.fy * iz, -intr.fy * yn * iz;
    Jacobian& jac = jacobians[j];
    jac.block<2, 3>(0, 0) = dpix_dq * rot;
    jac.col(3) = dpix_dq * (d_yaw * pt);
    jac.col(4) = dpix_dq * (d_pitch * pt);
    jac.col(5) = dpix_dq * (d_roll * pt);
    jac.col(6) = Eigen::Vector2d(xn, yn) * df_dfov;
  }

  const auto& img = problem.image_gcps;
  if (ev.in_front > 0 && !img.empty()) {
    Eigen::Vector2d proj_centroid = Eigen::Vector2d::Zero();
    Jacobian jac_sum = Jacobian::Zero();
    for (std::size_t j = 0; j < m; ++j) {
      if (!front[j]) continue;
      proj_centroid += pixels[j];
      jac_sum += jacobians[j];
    }
    const double inv = 1.0 / static_cast<double>(ev.in_front);
    const Eigen::Vector2d d = proj_centroid * inv - centroid(img);
    ev.r = d.squaredNorm();
    ev.grad_r = (2.0 * inv) * (jac_sum.transpose() * d);
  }

  if (ev.visible > 0 && !img.empty()) {
    std::vector<Eigen::Vector2d> visible_pixels;
    std::vector<std::size_t> visible_index;
    visible_pixels.reserve(ev.visible);
    visible_index.reserve(ev.visible);
    for (std::size_t j = 0; j < m; ++j) {
      if (!ev.visibility[j]) continue;
      visible_pixels.push_back(pixels[j]);
      visible_index.push_back(j);
    }
    const auto chamfer = chamfer_loss(img, visible_pixels);
    ev.degenerate = false;
    ev.s = chamfer->value;
    ev.assignment.resize(img.size());
    const double inv_n = 1.0 / static_cast<double>(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::size_t j = visible_index[chamfer->nearest[i]];
      ev.assignment[i] = j;
      const Eigen::Vector2d e = pixels[j] - img[i];
      const double len = e.norm();
      // |e| has a kink at 0; take its minimal-norm subgradient, 0, there.
      if (len > kCoincidentPx) ev.grad_s += (inv_n / len) * (jacobians[j].transpose() * e);
    }
  }
  return ev;
}

std::optional<double> objective(const CameraParams& cam, const RegistrationProblem& problem,
                                double lambda) {
  const Evaluation ev = evaluate(cam, problem);
  if (ev.degenerate) return std::nullopt;
  return ev.objective(lambda);
}

CameraParams::Vector gradient(const CameraParams& cam, const RegistrationProblem& problem,
                              double lambda) {
  return evaluate(cam, problem).gradient(lambda);
}

double scene_extent(std::span<const WorldPoint> points) {
  if (points.empty()) return 1.0;
  Eigen::Vector3d lo = points.front().vec();
  Eigen::Vector3d hi = lo;
  for (const auto& p : points) {
    lo = lo.cwiseMin(p.vec());
    hi = hi.cwiseMax(p.vec());
  }
  return std::max(1.0, (hi - lo).maxCoeff());
}

namespace {

constexpr double kMinFov = 1e-3;
constexpr double kMaxFov = std::numbers::pi - 1e-3;
constexpr int kMaxLineSearch = 60;
constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;

struct RunResult {
  CameraParams camera;
  Evaluation eval;
  double lambda = 0.0;
  std::vector<TraceEntry> trace;
  SolveStatus status = SolveStatus::kMaxIters;
};

bool better(const Evaluation& cand, double cand_obj, const Evaluation& cur, double cur_obj) {
  if (cand.in_front == 0) return false;
  if (cand.degenerate != cur.degenerate) return !cand.degenerate;
  return cand_obj < cur_obj;
}

// BFGS with a weak Wolfe line search. With `regularized` false the centroid
// term only acts while degenerate.
RunResult run_descent(const RegistrationProblem& problem, const CameraParams& start,
                      const CameraParams::Vector& base_step, int max_iters, bool regularized) {
  using Vec = CameraParams::Vector;
  using Mat = Eigen::Matrix<double, CameraParams::kDim, CameraParams::kDim>;
  const OptimizerSchedule& sched = problem.schedule;
  RunResult run;

  // Iterates live in coordinates scaled by the per-parameter step, so the
  // identity inverse Hessian corresponds to the configured step sizes.
  auto to_theta = [&](const Vec& z) {
    Vec theta = z.cwiseProduct(base_step);
    theta[6] = std::clamp(theta[6], kMinFov, kMaxFov);
    return theta;
  };
  auto eval_at = [&](const Vec& z) { return evaluate(CameraParams::from_vector(to_theta(z)), problem); };
  auto lambda_for = [&](const Evaluation& ev) {
    if (ev.degenerate) return 1.0;
    return regularized ? adapt_lambda(ev.s, sched.lambda_0, sched.lambda_rule) : 0.0;
  };
  auto scaled_grad = [&](const Evaluation& ev, double lambda) -> Vec {
    return ev.gradient(lambda).cwiseProduct(base_step);
  };

  Vec z = start.to_vector().cwiseQuotient(base_step);
  Evaluation cur = eval_at(z);
  Mat h_inv = Mat::Identity();
  bool fresh = true;  // h_inv has not been updated since the last reset
  // Curvature learned while the centroid term dominates is stale once the
  // point-set term takes over.
  auto centroid_dominated = [](const Evaluation& ev, double lambda) {
    return !ev.degenerate && lambda * ev.r > (1.0 - lambda) * ev.s;
  };
  bool was_centroid_dominated = centroid_dominated(cur, lambda_for(cur));

  Vec best_z = z;
  Evaluation best_eval = cur;
  double best_s = cur.degenerate ? std::numeric_limits<double>::infinity() : cur.s;
  double reference_s = best_s;
  int last_improvement = 0;

  for (int iter = 1; iter <= max_iters; ++iter) {
    if (cur.in_front == 0) {
      run.status = SolveStatus::kDegenerate;
      break;
    }
    const double lambda = lambda_for(cur);
    const bool dominated = centroid_dominated(cur, lambda);
    if (was_centroid_dominated && !dominated) {
      h_inv.setIdentity();
      fresh = true;
    }
    was_centroid_dominated = dominated;
    const double f0 = cur.objective(lambda);
    const Vec g0 = scaled_grad(cur, lambda);

    // Weak Wolfe bracketing search along the quasi-Newton direction; one
    // retry along the plain scaled gradient when the direction fails.
    bool moved = false;
    for (int attempt = 0; attempt < 2 && !moved; ++attempt) {
      if (attempt == 1) {
        if (fresh) break;
        h_inv.setIdentity();
        fresh = true;
      }
      Vec d = -h_inv * g0;
      double slope = g0.dot(d);
      if (!(slope < 0.0) || !std::isfinite(slope)) continue;
      if (fresh) {
        // Unit first step in scaled coordinates.
        d /= d.norm();
        slope = g0.dot(d);
      }

      double lo = 0.0, hi = std::numeric_limits<double>::infinity(), t = 1.0;
      std::optional<std::pair<Vec, Evaluation>> accepted;
      for (int k = 0; k < kMaxLineSearch; ++k) {
        const Vec cand = z + t * d;
        Evaluation ev = eval_at(cand);
        const double f = ev.objective(lambda);
        if (!(ev.in_front > 0) || !std::isfinite(f) || f > f0 + kArmijo * t * slope ||
            (ev.degenerate && !cur.degenerate)) {
          hi = t;
        } else {
          const bool curvature_ok = scaled_grad(ev, lambda).dot(d) >= kCurvature * slope;
          accepted.emplace(cand, std::move(ev));
          if (curvature_ok) break;
          lo = t;
        }
        t = std::isinf(hi) ? 2.0 * lo : 0.5 * (lo + hi);
      }
      if (!accepted || !better(accepted->second, accepted->second.objective(lambda), cur, f0)) continue;

      const Vec s_vec = accepted->first - z;
      const Vec y_vec = scaled_grad(accepted->second, lambda) - g0;
      const double sy = s_vec.dot(y_vec);
      z = accepted->first;
      const bool regime_change = accepted->second.degenerate != cur.degenerate;
      cur = std::move(accepted->second);
      moved = true;

      if (regime_change) {
        h_inv.setIdentity();
        fresh = true;
      } else if (sy > 1e-12 * s_vec.norm() * y_vec.norm()) {
        if (fresh) h_inv *= sy / y_vec.squaredNorm();
        const double rho = 1.0 / sy;
        const Mat v = Mat::Identity() - rho * y_vec * s_vec.transpose();
        h_inv = v.transpose() * h_inv * v + rho * s_vec * s_vec.transpose();
        fresh = false;
      }
    }

    const double lambda_after = lambda_for(cur);
    run.trace.push_back({iter, cur.degenerate ? std::numeric_limits<double>::quiet_NaN() : cur.s,
                         cur.r, lambda_after, cur.objective(lambda_after)});

    if (!cur.degenerate && cur.s < best_s) {
      if (!(reference_s - cur.s < sched.convergence_tol)) {
        reference_s = cur.s;
        last_improvement = iter;
      }
      best_s = cur.s;
      best_z = z;
      best_eval = cur;
    } else if (best_eval.degenerate && cur.degenerate) {
      best_z = z;
      best_eval = cur;
    }

    if (!moved) {
      run.status = cur.degenerate ? SolveStatus::kDegenerate : SolveStatus::kConverged;
      break;
    }
    if (!cur.degenerate && iter - last_improvement >= sched.patience) {
      run.status = SolveStatus::kConverged;
      break;
    }
    if (iter == max_iters) run.status = SolveStatus::kMaxIters;
  }
  if (max_iters == 0) {
    run.status = cur.degenerate ? SolveStatus::kDegenerate : SolveStatus::kMaxIters;
  }
  if (best_eval.degenerate) run.status = SolveStatus::kDegenerate;

  run.camera = CameraParams::from_vector(to_theta(best_z));
  run.eval = std::move(best_eval);
  run.lambda = lambda_for(run.eval);
  return run;
}

CameraParams jitter(const CameraParams& base, double extent, std::mt19937_64& rng) {
  constexpr double kAngle = 10.0 * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  CameraParams c = base;
  for (int k = 0; k < 3; ++k) c.t[k] += 0.1 * extent * unit(rng);
  c.yaw += kAngle * unit(rng);
  c.pitch += kAngle * unit(rng);
  c.roll += kAngle * unit(rng);
  c.fov = std::clamp(c.fov + kAngle * unit(rng), kMinFov, kMaxFov);
  return c;
}

}  // namespace

RegistrationResult solve(const RegistrationProblem& problem, std::uint64_t seed) {
  problem.validate();
  const OptimizerSchedule& sched = problem.schedule;
  const double extent = scene_extent(problem.world_gcps);
  CameraParams::Vector base_step;
  base_step << CameraParams::Vector::Constant(0.0);
  base_step.head<3>().setConstant(sched.step_translation * extent);
  base_step.segment<3>(3).setConstant(sched.step_angle);
  base_step[6] = sched.step_fov;

  std::mt19937_64 rng(seed);
  std::optional<RunResult> best;
  int best_index = 0;
  int runs = 0;
  int degenerate_runs = 0;

  for (int k = 0; k <= sched.restarts; ++k) {
    const CameraParams start = k == 0 ? problem.initial_camera
                                      : jitter(problem.initial_camera, extent, rng);
    RunResult run = run_descent(problem, start, base_step, sched.max_iters, true);
    const int remaining = sched.max_iters - static_cast<int>(run.trace.size());
    if (run.status != SolveStatus::kDegenerate && remaining > 0 && run.lambda > 0.0) {
      // Unregularized refinement from the best iterate: a centroid offset
      // that the true GCP sets share would otherwise bias the final pose.
      RunResult refine = run_descent(problem, run.camera, base_step, remaining, false);
      const int offset = static_cast<int>(run.trace.size());
      for (TraceEntry& e : refine.trace) {
        e.iter += offset;
        run.trace.push_back(e);
      }
      if (refine.status != SolveStatus::kDegenerate && refine.eval.s <= run.eval.s) {
        run.camera = refine.camera;
        run.eval = std::move(refine.eval);
        run.lambda = refine.lambda;
        run.status = refine.status;
      }
    }
    const auto good = [&](const RunResult& r) {
      return r.status != SolveStatus::kDegenerate && r.eval.s <= sched.restart_threshold;
    };
    if (!good(run) && sched.lambda_0 > 0.0) {
      // The centroid term pulls toward a wrong pose when the two GCP sets
      // cover different parts of the scene; retry this start without it.
      RunResult plain = run_descent(problem, start, base_step, sched.max_iters, false);
      if (plain.status != SolveStatus::kDegenerate &&
          (run.status == SolveStatus::kDegenerate || plain.eval.s < run.eval.s)) {
        run = std::move(plain);
      }
    }
    ++runs;
    if (run.status == SolveStatus::kDegenerate) ++degenerate_runs;

    const bool improves =
        !best || (best->status == SolveStatus::kDegenerate && run.status != SolveStatus::kDegenerate) ||
        (run.status != SolveStatus::kDegenerate && run.eval.s < best->eval.s);
    if (improves) {
      best = std::move(run);
      best_index = k;
    }
    if (best->status != SolveStatus::kDegenerate && best->eval.s <= sched.restart_threshold) break;
  }

  RegistrationResult result;
  result.camera = best->camera;
  result.status = best->status;
  result.trace = std::move(best->trace);
  result.iterations = static_cast<int>(result.trace.size());
  result.restarts_used = runs - 1;
  if (best->status == SolveStatus::kDegenerate) {
    result.final_s = std::numeric_limits<double>::infinity();
    result.final_loss = best->eval.objective(1.0);
    result.diagnostic = "the initial run and " + std::to_string(runs - 1) +
                        " restarts all left no DEM GCP visible; the initial camera is likely "
                        "facing away from the terrain";
  } else {
    result.final_s = best->eval.s;
    result.final_loss = best->eval.objective(best->lambda);
    result.diagnostic = "best run " + std::to_string(best_index) + " of " + std::to_string(runs) +
                        " (" + std::to_string(degenerate_runs) + " degenerate)";
  }
  return result;
}

}  // namespace monoplot
