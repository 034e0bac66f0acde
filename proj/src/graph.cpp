#include "seamstitch/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>

namespace seamstitch {

PoseGraph build_graph(Group group, int num_segments, std::vector<Edge> adjacent_edges,
                      std::vector<Edge> loop_edges) {
  if (num_segments < 1) throw Error(ErrorCode::InvalidArgument, "graph needs at least one segment");
  PoseGraph g;
  g.group = group;
  for (int k = 1; k <= num_segments; ++k) g.nodes.emplace(k, Transformd::identity(group));

  auto add = [&](Edge& e, bool loop) {
    if (e.measurement.group() != group)
      throw Error(ErrorCode::GroupMismatch, "edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                                                " measurement is not in the graph group");
    if (e.from == e.to) throw Error(ErrorCode::InvalidArgument, "self-loop edge");
    if (!(e.weight > 0)) throw Error(ErrorCode::InvalidArgument, "edge weight must be positive");
    if (loop) {
      for (int n : {e.from, e.to}) g.nodes.emplace(n, Transformd::identity(group));
    } else if (!g.nodes.count(e.from) || !g.nodes.count(e.to)) {
      throw Error(ErrorCode::InvalidArgument, "adjacent edge references unknown segment");
    }
    g.edges.push_back(std::move(e));
  };
  for (Edge& e : adjacent_edges) add(e, false);
  for (Edge& e : loop_edges) add(e, true);

  std::map<int, std::vector<int>> adj;
  for (const Edge& e : g.edges) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::set<int> seen{g.gauge};
  std::queue<int> q;
  q.push(g.gauge);
  while (!q.empty()) {
    const int n = q.front();
    q.pop();
    for (int m : adj[n])
      if (seen.insert(m).second) q.push(m);
  }
  std::vector<int> unreachable;
  for (const auto& [id, _] : g.nodes)
    if (!seen.count(id)) unreachable.push_back(id);
  if (!unreachable.empty()) {
    std::string names;
    for (int id : unreachable) names += (names.empty() ? "" : ", ") + std::to_string(id);
    throw Error(ErrorCode::Disconnected, "pose graph is disconnected; unreachable nodes: " + names);
  }
  return g;
}

namespace {

int kind_priority(EdgeKind k) {
  switch (k) {
    case EdgeKind::Pointmap: return 0;
    case EdgeKind::LoopPointmap: return 1;
    case EdgeKind::Pose: return 2;
    case EdgeKind::LoopPose: return 3;
  }
  return 4;
}

}  // namespace

PoseGraph initialize_nodes(PoseGraph g) {
  std::set<int> done{g.gauge};
  g.nodes[g.gauge] = Transformd::identity(g.group);

  // Sequential chain first.
  for (auto it = g.nodes.begin(); it != g.nodes.end(); ++it) {
    const int k = it->first;
    if (done.count(k)) continue;
    const Edge* best = nullptr;
    for (const Edge& e : g.edges)
      if (e.to == k && e.from == k - 1 && done.count(e.from) && !is_loop(e.kind) &&
          (!best || kind_priority(e.kind) < kind_priority(best->kind)))
        best = &e;
    if (!best) continue;
    it->second = compose(g.nodes.at(best->from), best->measurement);
    done.insert(k);
  }

  // Everything else through the best available incident edge.
  std::vector<const Edge*> order;
  for (const Edge& e : g.edges) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const Edge* a, const Edge* b) {
    if (kind_priority(a->kind) != kind_priority(b->kind)) return kind_priority(a->kind) < kind_priority(b->kind);
    return std::min(a->from, a->to) < std::min(b->from, b->to);
  });
  bool progress = true;
  while (done.size() < g.nodes.size() && progress) {
    progress = false;
    for (const Edge* e : order) {
      const bool f = done.count(e->from), t = done.count(e->to);
      if (f && !t) {
        g.nodes[e->to] = compose(g.nodes.at(e->from), e->measurement);
        done.insert(e->to);
        progress = true;
        break;
      }
      if (t && !f) {
        g.nodes[e->from] = compose(g.nodes.at(e->to), inverse(e->measurement));
        done.insert(e->from);
        progress = true;
        break;
      }
    }
  }
  if (done.size() < g.nodes.size())
    throw Error(ErrorCode::Disconnected, "cannot initialize nodes of a disconnected graph");
  return g;
}

EdgeResidual edge_residual(const Edge& e, const Transformd& from, const Transformd& to) {
  const Transformd err = compose(inverse(e.measurement), compose(inverse(from), to));
  const double sw = std::sqrt(e.weight);
  EdgeResidual out;
  try {
    out.r = sw * log_params(err);
    if (!out.r.allFinite()) throw Error(ErrorCode::NonFinite, "residual");
  } catch (const Error&) {
    // First-order surrogate: traceless part of (M - I), scaled up so a far
    // from identity edge still dominates the cost.
    out.fallback = true;
    const Matrix4d d = err.matrix() - Matrix4d::Identity();
    out.r = sw * 10.0 * detail::sl4_vee<double>(d);
  }
  return out;
}

Eigen::MatrixXd edge_jacobian(const Edge& e, const Transformd& from, const Transformd& to, bool wrt_to,
                              double step) {
  const int k = chart_dim(e.measurement.group());
  Eigen::MatrixXd J(k, k);
  for (int p = 0; p < k; ++p) {
    VectorX<double> d = VectorX<double>::Zero(k);
    d(p) = step;
    const Transformd plus = exp_params(e.measurement.group(), d);
    const Transformd minus = exp_params(e.measurement.group(), VectorX<double>(-d));
    const Transformd& node = wrt_to ? to : from;
    const Transformd np = compose(node, plus), nm = compose(node, minus);
    const auto rp = wrt_to ? edge_residual(e, from, np) : edge_residual(e, np, to);
    const auto rm = wrt_to ? edge_residual(e, from, nm) : edge_residual(e, nm, to);
    J.col(p) = (rp.r - rm.r) / (2 * step);
  }
  return J;
}

namespace {

double robust_cost(double norm, bool robust, double delta) {
  if (!robust || norm <= delta) return norm * norm;
  return 2 * delta * norm - delta * delta;
}

double robust_scale(double norm, bool robust, double delta) {
  if (!robust || norm <= delta) return 1.0;
  return std::sqrt(delta / norm);
}

double cost_of(const PoseGraph& g, const LmConfig& cfg, bool* fallback = nullptr) {
  double c = 0;
  for (const Edge& e : g.edges) {
    const EdgeResidual r = edge_residual(e, g.nodes.at(e.from), g.nodes.at(e.to));
    if (fallback && r.fallback) *fallback = true;
    c += robust_cost(r.r.norm(), e.robust, cfg.loop_huber_delta);
  }
  return c;
}

}  // namespace

double graph_cost(const PoseGraph& graph, const LmConfig& cfg) { return cost_of(graph, cfg); }

std::pair<PoseGraph, LmReport> optimize_lm(const PoseGraph& graph, const LmConfig& cfg) {
  PoseGraph g = graph;
  LmReport rep;
  const Group group = g.group;
  const int k = chart_dim(group);

  std::vector<int> free_nodes;
  std::map<int, int> slot;
  for (const auto& [id, _] : g.nodes)
    if (id != g.gauge) {
      slot[id] = static_cast<int>(free_nodes.size());
      free_nodes.push_back(id);
    }
  const Eigen::Index n_params = static_cast<Eigen::Index>(free_nodes.size()) * k;
  const auto n_edges = static_cast<Eigen::Index>(g.edges.size());

  std::map<int, std::vector<int>> incident;
  for (int i = 0; i < n_edges; ++i) {
    incident[g.edges[i].from].push_back(i);
    incident[g.edges[i].to].push_back(i);
  }

  double cost = cost_of(g, cfg, &rep.used_fallback);
  if (!std::isfinite(cost)) throw Error(ErrorCode::NonFinite, "pose graph cost is not finite");
  rep.initial_cost = cost;

  double lambda = cfg.initial_lambda;
  int retries = 0;
  rep.stop_reason = "max-iterations";
  for (int iter = 0; iter < cfg.max_iters && n_params > 0; ++iter) {
    // Roundoff floor: about 1e-12 of chart residual per edge.
    if (cost <= 1e-24 * static_cast<double>(std::max<Eigen::Index>(n_edges, 1))) {
      rep.converged = true;
      rep.stop_reason = "zero-cost";
      break;
    }

    // Residuals and robust scales at the current iterate.
    std::vector<VectorX<double>> r(n_edges);
    std::vector<double> scale(n_edges);
    for (int i = 0; i < n_edges; ++i) {
      const Edge& e = g.edges[i];
      r[i] = edge_residual(e, g.nodes.at(e.from), g.nodes.at(e.to)).r;
      scale[i] = robust_scale(r[i].norm(), e.robust, cfg.loop_huber_delta);
    }

    // Block Jacobians by central differences, one node at a time.
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n_params, n_params);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n_params);
    std::vector<std::map<int, Eigen::MatrixXd>> jac(n_edges);  // edge -> node -> k x k
    for (int node : free_nodes) {
      for (int ei : incident[node]) {
        const Edge& e = g.edges[ei];
        const bool wrt_to = e.to == node;
        jac[ei][node] = edge_jacobian(e, g.nodes.at(e.from), g.nodes.at(e.to), wrt_to, cfg.fd_step);
      }
    }
    for (int ei = 0; ei < n_edges; ++ei) {
      const double s2 = scale[ei] * scale[ei];
      for (const auto& [na, Ja] : jac[ei]) {
        const Eigen::Index ia = slot.at(na) * k;
        grad.segment(ia, k) += s2 * Ja.transpose() * r[ei];
        for (const auto& [nb, Jb] : jac[ei]) {
          const Eigen::Index ib = slot.at(nb) * k;
          H.block(ia, ib, k, k) += s2 * Ja.transpose() * Jb;
        }
      }
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd A = H;
      const double dmax = std::max(H.diagonal().maxCoeff(), 1e-12);
      for (Eigen::Index i = 0; i < n_params; ++i)
        A(i, i) += lambda * std::max(H(i, i), 1e-9 * dmax);
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
      Eigen::VectorXd delta = ldlt.solve(-grad);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        lambda *= 2;
        if (++retries > cfg.max_retries) break;
        continue;
      }

      PoseGraph trial = g;
      for (int node : free_nodes)
        trial.nodes[node] = compose(g.nodes.at(node),
                                    exp_params(group, VectorX<double>(delta.segment(slot.at(node) * k, k))));
      const double trial_cost = cost_of(trial, cfg);
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double decrease = (cost - trial_cost) / cost;
        g = std::move(trial);
        cost = trial_cost;
        lambda = std::max(lambda / 3, 1e-12);
        retries = 0;
        accepted = true;
        ++rep.iterations;
        if (delta.norm() < cfg.tol) {
          rep.converged = true;
          rep.stop_reason = "small-step";
        } else if (decrease < cfg.rel) {
          rep.converged = true;
          rep.stop_reason = "small-decrease";
        }
      } else {
        lambda *= 2;
        if (++retries > cfg.max_retries) break;
        if (delta.norm() < cfg.tol) break;
      }
    }
    if (!accepted) {
      // No descent direction left at any damping: treat as converged when
      // the step has vanished, as a failure otherwise.
      rep.converged = grad.norm() < 1e-9 * (1 + cost);
      rep.failed = !rep.converged && retries > cfg.max_retries;
      rep.stop_reason = rep.failed ? "damping-exhausted" : "no-improvement";
      break;
    }
    if (rep.converged) break;
  }
  if (n_params == 0) {
    rep.converged = true;
    rep.stop_reason = "no-free-nodes";
  }

  rep.final_cost = cost;
  for (const Edge& e : g.edges) {
    const EdgeResidual er = edge_residual(e, g.nodes.at(e.from), g.nodes.at(e.to));
    rep.edge_residual_norms.push_back(er.r.norm());
    rep.used_fallback = rep.used_fallback || er.fallback;
  }
  return {std::move(g), rep};
}

// ---------------------------------------------------------------------------

namespace {

double node_scale(const Transformd& t) {
  if (t.group() == Group::Sim3) return t.scale();
  return std::cbrt(std::abs(action_jacobian(t, Vector3d::Zero().eval()).determinant()));
}

}  // namespace

double mean_scale_anchor(const PoseGraph& graph, int num_segments) {
  double log_sum = 0;
  int n = 0;
  for (const auto& [id, t] : graph.nodes)
    if (id >= 1 && id <= num_segments) {
      log_sum += std::log(node_scale(t));
      ++n;
    }
  return n > 0 ? std::exp(-log_sum / n) : 1.0;
}

GlobalMap stitch(const std::vector<SegmentBundle>& bundles, const PoseGraph& graph, const SegmentPlan& plan,
                 const StitchConfig& cfg) {
  std::map<int, const SegmentBundle*> by_id;
  for (const SegmentBundle& b : bundles)
    if (!b.loop_pair) by_id[b.segment_id] = &b;

  GlobalMap map;
  std::vector<double> conf;
  const double c = cfg.world_scale;
  for (int f = 1; f <= plan.n_frames; ++f) {
    const int owner = owner_segment(plan, f);
    const auto it = by_id.find(owner);
    if (owner == 0 || it == by_id.end() || !graph.nodes.count(owner))
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(f) + " has no primary segment");
    const SegmentBundle& b = *it->second;
    const int local = b.local_index(f);
    if (local < 0)
      throw Error(ErrorCode::InvalidArgument, "frame " + std::to_string(f) + " missing from segment " +
                                                  std::to_string(owner));
    const FrameData& fd = b.frames[local];
    const Transformd& G = graph.nodes.at(owner);

    TrajectoryEntry te;
    te.frame_id = f;
    te.timestamp = fd.timestamp;
    te.segment_id = owner;
    te.pose.translation = c * apply(G, fd.pose.translation);
    if (G.group() == Group::Sim3) {
      te.pose.rotation = G.rotation() * fd.pose.rotation;
    } else {
      te.pose.rotation = project_to_so3<double>(action_jacobian(G, fd.pose.translation) * fd.pose.rotation);
      map.poses_approximated = true;
    }
    map.trajectory.push_back(te);

    for (Eigen::Index p = 0; p < fd.points.size(); ++p) {
      if (!fd.points.valid[p] || fd.confidence.values(p) < cfg.tau_c) continue;
      Vector3d x;
      try {
        x = c * apply(G, fd.points.point(p));
      } catch (const Error&) {
        continue;
      }
      map.points.push_back(x.cast<float>());
      if (!fd.rgb.empty())
        map.colors.push_back({fd.rgb[3 * p], fd.rgb[3 * p + 1], fd.rgb[3 * p + 2]});
      else
        map.colors.push_back({200, 200, 200});
      map.segment_ids.push_back(owner);
      conf.push_back(fd.confidence.values(p));
    }
  }

  if (map.points.size() > cfg.max_map_points) {
    std::vector<std::size_t> order(map.points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
    order.resize(cfg.max_map_points);
    std::sort(order.begin(), order.end());
    GlobalMap kept;
    kept.trajectory = std::move(map.trajectory);
    kept.poses_approximated = map.poses_approximated;
    for (std::size_t i : order) {
      kept.points.push_back(map.points[i]);
      kept.colors.push_back(map.colors[i]);
      kept.segment_ids.push_back(map.segment_ids[i]);
    }
    map = std::move(kept);
  }
  return map;
}

}  // namespace seamstitch
