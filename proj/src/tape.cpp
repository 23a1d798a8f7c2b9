#include "colt/tape.hpp"

#include <cmath>
#include <thread>
#include <utility>

#include "colt/errors.hpp"
#include "colt/stats.hpp"

namespace colt {

namespace {

constexpr int kChunkRows = 2048;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Contiguous [begin, end) chunk ranges for a fixed worker count. The split
/// depends only on (rows, worker count), so reductions done in range order
/// are reproducible.
std::vector<std::pair<int, int>> chunk_ranges(int rows, int workers) {
  const int n_chunks = (rows + kChunkRows - 1) / kChunkRows;
  std::vector<std::pair<int, int>> ranges;
  int done = 0;
  for (int t = 0; t < workers && done < n_chunks; ++t) {
    const int take = (n_chunks - done + workers - t - 1) / (workers - t);
    ranges.emplace_back(done, done + take);
    done += take;
  }
  return ranges;
}

void run_ranges(const std::vector<std::pair<int, int>>& ranges,
                const std::function<void(int, int, int)>& fn_range_chunk, int rows) {
  auto body = [&](int range_idx) {
    for (int c = ranges[range_idx].first; c < ranges[range_idx].second; ++c) {
      const int lo = c * kChunkRows;
      const int hi = std::min(rows, lo + kChunkRows);
      fn_range_chunk(range_idx, lo, hi);
    }
  };
  if (ranges.size() <= 1) {
    if (!ranges.empty()) body(0);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(ranges.size() - 1);
  for (std::size_t t = 1; t < ranges.size(); ++t) workers.emplace_back(body, static_cast<int>(t));
  body(0);
  for (auto& w : workers) w.join();
}

}  // namespace

struct GradientTape::Impl {
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd adjoint;
    bool adjoint_set = false;
    bool needs_grad = false;
    std::function<void()> forward_fn;
    std::function<void()> backward_fn;
  };

  struct Slot {
    NetworkParams* net = nullptr;
    Eigen::VectorXd grad;
    // per-worker-range gradient accumulators, reduced in fixed order
    std::vector<Eigen::VectorXd> partial;
  };

  std::vector<Node> nodes;
  std::vector<Slot> slots;
  int workers = tape_thread_count();

  Node& node(TapeTensor t) { return nodes[t.id]; }
  const Node& node(TapeTensor t) const { return nodes[t.id]; }

  Eigen::MatrixXd& adj(int id) {
    Node& n = nodes[id];
    if (!n.adjoint_set) {
      n.adjoint.resizeLike(n.value);
      n.adjoint.setZero();
      n.adjoint_set = true;
    }
    return n.adjoint;
  }

  TapeTensor push(Eigen::MatrixXd value, bool needs_grad) {
    nodes.push_back(Node{std::move(value), {}, false, needs_grad, {}, {}});
    return TapeTensor{static_cast<int>(nodes.size()) - 1};
  }

  static TapeTensor binary_op(Impl* im, TapeTensor a, TapeTensor b, int kind);
};

GradientTape::GradientTape() : impl_(std::make_unique<Impl>()) {}
GradientTape::~GradientTape() = default;

ParamSlot GradientTape::track(NetworkParams& net) {
  net.validate();
  Impl::Slot slot;
  slot.net = &net;
  slot.grad = Eigen::VectorXd::Zero(net.weights.size());
  impl_->slots.push_back(std::move(slot));
  return ParamSlot{static_cast<int>(impl_->slots.size()) - 1};
}

TapeTensor GradientTape::constant(Eigen::MatrixXd value) {
  return impl_->push(std::move(value), false);
}

TapeTensor GradientTape::variable(Eigen::MatrixXd value) {
  return impl_->push(std::move(value), true);
}

void GradientTape::set_value(TapeTensor leaf, const Eigen::MatrixXd& value) {
  Impl::Node& n = impl_->node(leaf);
  if (n.forward_fn) throw ContractError("set_value: not a leaf node");
  if (n.value.rows() != value.rows() || n.value.cols() != value.cols()) {
    throw ShapeError("set_value: shape mismatch");
  }
  n.value = value;
}

const Eigen::MatrixXd& GradientTape::value(TapeTensor t) const {
  return impl_->node(t).value;
}

double GradientTape::scalar_value(TapeTensor t) const {
  const Eigen::MatrixXd& v = impl_->node(t).value;
  if (v.size() != 1) throw ContractError("scalar_value: node is not scalar");
  return v(0, 0);
}

TapeTensor GradientTape::apply_net(ParamSlot slot, TapeTensor input) {
  Impl* im = impl_.get();
  NetworkParams& net = *im->slots[slot.id].net;
  const Eigen::MatrixXd& x = im->node(input).value;
  if (x.cols() != net.input_dim()) throw ShapeError("apply_net: input dim mismatch");
  const int rows = static_cast<int>(x.rows());
  const int n_layers = net.layer_count();
  const bool sine = net.activation == Activation::sine;

  // Post-activation hidden outputs are kept for the backward pass; sine
  // additionally needs pre-activations.
  auto hidden = std::make_shared<std::vector<Eigen::MatrixXd>>();
  auto pre = std::make_shared<std::vector<Eigen::MatrixXd>>();
  hidden->resize(n_layers - 1);
  if (sine) pre->resize(n_layers - 1);
  for (int l = 0; l + 1 < n_layers; ++l) {
    (*hidden)[l].resize(rows, net.layer_dims[l + 1]);
    if (sine) (*pre)[l].resize(rows, net.layer_dims[l + 1]);
  }

  TapeTensor out = im->push(Eigen::MatrixXd::Zero(rows, net.output_dim()), true);
  const int out_id = out.id;
  const int in_id = input.id;
  const int slot_id = slot.id;

  im->node(out).forward_fn = [im, out_id, in_id, slot_id, hidden, pre, rows, sine]() {
    NetworkParams& nn = *im->slots[slot_id].net;
    const Eigen::MatrixXd& xin = im->nodes[in_id].value;
    Eigen::MatrixXd& y = im->nodes[out_id].value;
    const int layers = nn.layer_count();
    auto ranges = chunk_ranges(rows, im->workers);
    run_ranges(
        ranges,
        [&](int, int lo, int hi) {
          const int len = hi - lo;
          Eigen::MatrixXd h = xin.middleRows(lo, len);
          std::size_t off = 0;
          for (int l = 0; l < layers; ++l) {
            const int din = nn.layer_dims[l];
            const int dout = nn.layer_dims[l + 1];
            ConstRowMajorMap w(nn.weights.data() + off, dout, din);
            Eigen::Map<const Eigen::VectorXd> b(
                nn.weights.data() + off + static_cast<std::size_t>(din) * dout, dout);
            Eigen::MatrixXd z(len, dout);
            z.noalias() = h * w.transpose();
            z.rowwise() += b.transpose();
            if (l + 1 < layers) {
              if (sine) {
                (*pre)[l].middleRows(lo, len) = z;
                z = z.array().sin().matrix();
              } else if (nn.activation == Activation::relu) {
                z = z.cwiseMax(0.0);
              }
              (*hidden)[l].middleRows(lo, len) = z;
            }
            h = std::move(z);
            off += static_cast<std::size_t>(din) * dout + dout;
          }
          y.middleRows(lo, len) = h;
        },
        rows);
  };

  const bool input_needs_grad = im->node(input).needs_grad;
  im->node(out).backward_fn = [im, out_id, in_id, slot_id, hidden, pre, rows, sine,
                               input_needs_grad]() {
    NetworkParams& nn = *im->slots[slot_id].net;
    Impl::Slot& slot_ref = im->slots[slot_id];
    const Eigen::MatrixXd& xin = im->nodes[in_id].value;
    const Eigen::MatrixXd& dy = im->nodes[out_id].adjoint;
    const int layers = nn.layer_count();
    auto ranges = chunk_ranges(rows, im->workers);

    if (slot_ref.partial.size() < ranges.size()) slot_ref.partial.resize(ranges.size());
    for (std::size_t r = 0; r < ranges.size(); ++r) {
      if (slot_ref.partial[r].size() != nn.weights.size()) {
        slot_ref.partial[r] = Eigen::VectorXd::Zero(nn.weights.size());
      } else {
        slot_ref.partial[r].setZero();
      }
    }
    Eigen::MatrixXd* dx = nullptr;
    if (input_needs_grad) dx = &im->adj(in_id);

    run_ranges(
        ranges,
        [&](int range_idx, int lo, int hi) {
          const int len = hi - lo;
          Eigen::VectorXd& acc = slot_ref.partial[range_idx];
          Eigen::MatrixXd dz = dy.middleRows(lo, len);
          for (int l = layers - 1; l >= 0; --l) {
            const int din = nn.layer_dims[l];
            const int dout = nn.layer_dims[l + 1];
            const std::size_t off = nn.layer_offset(l);
            // weight gradient viewed as the col-major transpose of the
            // row-major (out x in) block
            Eigen::Map<Eigen::MatrixXd> dwt(acc.data() + off, din, dout);
            Eigen::Map<Eigen::VectorXd> db(
                acc.data() + off + static_cast<std::size_t>(din) * dout, dout);
            if (l == 0) {
              dwt.noalias() += xin.middleRows(lo, len).transpose() * dz;
            } else {
              dwt.noalias() += (*hidden)[l - 1].middleRows(lo, len).transpose() * dz;
            }
            db += dz.colwise().sum().transpose();
            if (l == 0 && dx == nullptr) break;
            ConstRowMajorMap w(nn.weights.data() + off, dout, din);
            Eigen::MatrixXd dh(len, din);
            dh.noalias() = dz * w;
            if (l == 0) {
              dx->middleRows(lo, len) += dh;
              break;
            }
            if (sine) {
              dz = dh.array() * (*pre)[l - 1].middleRows(lo, len).array().cos();
            } else if (nn.activation == Activation::relu) {
              dz = dh.array() *
                   ((*hidden)[l - 1].middleRows(lo, len).array() > 0.0).cast<double>();
            } else {
              dz = std::move(dh);
            }
          }
        },
        rows);

    for (const Eigen::VectorXd& p : slot_ref.partial) slot_ref.grad += p;
  };

  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::rowwise_distance(TapeTensor a, TapeTensor b) {
  Impl* im = impl_.get();
  const Eigen::MatrixXd& va = im->node(a).value;
  const Eigen::MatrixXd& vb = im->node(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw ShapeError("rowwise_distance: shape mismatch");
  }
  const bool needs = im->node(a).needs_grad || im->node(b).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(va.rows(), 1), needs);
  const int oid = out.id, aid = a.id, bid = b.id;
  im->node(out).forward_fn = [im, oid, aid, bid]() {
    im->nodes[oid].value.col(0) =
        (im->nodes[aid].value - im->nodes[bid].value).rowwise().norm();
  };
  if (needs) {
    const bool ga = im->node(a).needs_grad, gb = im->node(b).needs_grad;
    im->node(out).backward_fn = [im, oid, aid, bid, ga, gb]() {
      const Eigen::MatrixXd& diff_a = im->nodes[aid].value;
      const Eigen::MatrixXd& diff_b = im->nodes[bid].value;
      const Eigen::MatrixXd& d = im->nodes[oid].value;
      const Eigen::MatrixXd& dd = im->nodes[oid].adjoint;
      // scale = adjoint / max(dist, tiny); the zero-distance subgradient is 0
      Eigen::ArrayXd s = dd.col(0).array() / d.col(0).array().max(1e-300);
      Eigen::MatrixXd g = (diff_a - diff_b).array().colwise() * s;
      if (ga) im->adj(aid) += g;
      if (gb) im->adj(bid) -= g;
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::grouped_distance(TapeTensor points, TapeTensor centers, int group) {
  Impl* im = impl_.get();
  const Eigen::MatrixXd& p = im->node(points).value;
  const Eigen::MatrixXd& c = im->node(centers).value;
  if (group < 1) throw ContractError("grouped_distance: group must be >= 1");
  if (p.cols() != c.cols() || p.rows() != c.rows() * group) {
    throw ShapeError("grouped_distance: points must be (centers.rows * group) x dim");
  }
  const bool gp = im->node(points).needs_grad;
  const bool gc = im->node(centers).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(p.rows(), 1), gp || gc);
  const int oid = out.id, pid = points.id, cid = centers.id;
  im->node(out).forward_fn = [im, oid, pid, cid, group]() {
    const Eigen::MatrixXd& pv = im->nodes[pid].value;
    const Eigen::MatrixXd& cv = im->nodes[cid].value;
    Eigen::MatrixXd& dv = im->nodes[oid].value;
    const int n = static_cast<int>(cv.rows());
    detail::parallel_row_chunks(n, 256, [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) {
        dv.col(0).segment(static_cast<Eigen::Index>(i) * group, group) =
            (pv.middleRows(static_cast<Eigen::Index>(i) * group, group).rowwise() -
             cv.row(i))
                .rowwise()
                .norm();
      }
    });
  };
  if (gp || gc) {
    im->node(out).backward_fn = [im, oid, pid, cid, group, gp, gc]() {
      const Eigen::MatrixXd& pv = im->nodes[pid].value;
      const Eigen::MatrixXd& cv = im->nodes[cid].value;
      const Eigen::MatrixXd& dv = im->nodes[oid].value;
      const Eigen::MatrixXd& dd = im->nodes[oid].adjoint;
      const int n = static_cast<int>(cv.rows());
      Eigen::MatrixXd* dp = gp ? &im->adj(pid) : nullptr;
      Eigen::MatrixXd* dc = gc ? &im->adj(cid) : nullptr;
      detail::parallel_row_chunks(n, 256, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
          const Eigen::Index base = static_cast<Eigen::Index>(i) * group;
          auto rows = pv.middleRows(base, group);
          Eigen::ArrayXd s = dd.col(0).segment(base, group).array() /
                             dv.col(0).segment(base, group).array().max(1e-300);
          Eigen::MatrixXd g = (rows.rowwise() - cv.row(i)).array().colwise() * s;
          if (dp) dp->middleRows(base, group) += g;
          if (dc) dc->row(i) -= g.colwise().sum();
        }
      });
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::ste_indicator(TapeTensor a, TapeTensor b, double temperature) {
  Impl* im = impl_.get();
  if (temperature <= 0.0) throw ConfigError("ste_indicator: temperature must be positive");
  const Eigen::MatrixXd& va = im->node(a).value;
  const Eigen::MatrixXd& vb = im->node(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw ShapeError("ste_indicator: shape mismatch");
  }
  const bool ga = im->node(a).needs_grad, gb = im->node(b).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(va.rows(), va.cols()), ga || gb);
  const int oid = out.id, aid = a.id, bid = b.id;
  im->node(out).forward_fn = [im, oid, aid, bid]() {
    im->nodes[oid].value =
        (im->nodes[aid].value.array() < im->nodes[bid].value.array()).cast<double>();
  };
  if (ga || gb) {
    im->node(out).backward_fn = [im, oid, aid, bid, temperature, ga, gb]() {
      const Eigen::ArrayXXd gap =
          (im->nodes[bid].value - im->nodes[aid].value).array() / temperature;
      const Eigen::ArrayXXd sig = gap.unaryExpr([](double z) { return sigmoid(z); });
      const Eigen::ArrayXXd w =
          im->nodes[oid].adjoint.array() * sig * (1.0 - sig) / temperature;
      if (gb) im->adj(bid).array() += w;
      if (ga) im->adj(aid).array() -= w;
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::ste_rank(TapeTensor point_dist, TapeTensor anchor_dist, int group,
                                  double temperature) {
  Impl* im = impl_.get();
  if (temperature <= 0.0) throw ConfigError("ste_rank: temperature must be positive");
  const Eigen::MatrixXd& pd = im->node(point_dist).value;
  const Eigen::MatrixXd& ad = im->node(anchor_dist).value;
  if (pd.cols() != 1 || ad.cols() != 1 || pd.rows() != ad.rows() * group) {
    throw ShapeError("ste_rank: expected (n*group x 1) distances and (n x 1) anchors");
  }
  const bool gp = im->node(point_dist).needs_grad;
  const bool ga = im->node(anchor_dist).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(ad.rows(), 1), gp || ga);
  const int oid = out.id, pid = point_dist.id, aid = anchor_dist.id;
  im->node(out).forward_fn = [im, oid, pid, aid, group]() {
    const Eigen::MatrixXd& pv = im->nodes[pid].value;
    const Eigen::MatrixXd& av = im->nodes[aid].value;
    Eigen::MatrixXd& u = im->nodes[oid].value;
    const int n = static_cast<int>(av.rows());
    for (int i = 0; i < n; ++i) {
      const Eigen::Index base = static_cast<Eigen::Index>(i) * group;
      u(i, 0) =
          (pv.col(0).segment(base, group).array() < av(i, 0)).cast<double>().sum() / group;
    }
  };
  if (gp || ga) {
    im->node(out).backward_fn = [im, oid, pid, aid, group, temperature, gp, ga]() {
      const Eigen::MatrixXd& pv = im->nodes[pid].value;
      const Eigen::MatrixXd& av = im->nodes[aid].value;
      const Eigen::MatrixXd& du = im->nodes[oid].adjoint;
      const int n = static_cast<int>(av.rows());
      Eigen::MatrixXd* dp = gp ? &im->adj(pid) : nullptr;
      Eigen::MatrixXd* da = ga ? &im->adj(aid) : nullptr;
      detail::parallel_row_chunks(n, 256, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
          const Eigen::Index base = static_cast<Eigen::Index>(i) * group;
          const Eigen::ArrayXd gap =
              (av(i, 0) - pv.col(0).segment(base, group).array()) / temperature;
          const Eigen::ArrayXd sig = gap.unaryExpr([](double z) { return sigmoid(z); });
          const Eigen::ArrayXd w = du(i, 0) * sig * (1.0 - sig) / (temperature * group);
          if (dp) dp->col(0).segment(base, group).array() -= w;
          if (da) (*da)(i, 0) += w.sum();
        }
      });
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::sinkhorn_uniform(TapeTensor ranks, double epsilon, int iterations) {
  Impl* im = impl_.get();
  if (epsilon <= 0.0) throw ConfigError("sinkhorn: epsilon must be positive");
  if (iterations < 1) throw ConfigError("sinkhorn: iterations must be >= 1");
  const Eigen::MatrixXd& r = im->node(ranks).value;
  if (r.cols() != 1) throw ShapeError("sinkhorn: ranks must be a column vector");
  const bool needs = im->node(ranks).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(1, 1), needs);
  const int oid = out.id, rid = ranks.id;
  auto cached_grad = std::make_shared<Eigen::VectorXd>();
  im->node(out).forward_fn = [im, oid, rid, epsilon, iterations, needs, cached_grad]() {
    detail::SinkhornResult res = detail::sinkhorn_uniform_impl(
        im->nodes[rid].value.col(0), epsilon, iterations, needs);
    im->nodes[oid].value(0, 0) = res.value;
    if (needs) *cached_grad = std::move(res.grad);
  };
  if (needs) {
    im->node(out).backward_fn = [im, oid, rid, cached_grad]() {
      im->adj(rid).col(0) += im->nodes[oid].adjoint(0, 0) * (*cached_grad);
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::logistic_loss(TapeTensor logits, Eigen::VectorXd labels) {
  Impl* im = impl_.get();
  const Eigen::MatrixXd& z = im->node(logits).value;
  if (z.cols() != 1 || z.rows() != labels.size()) {
    throw ShapeError("logistic_loss: logits must be (n x 1) matching labels");
  }
  const bool needs = im->node(logits).needs_grad;
  auto y = std::make_shared<Eigen::VectorXd>(std::move(labels));
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(1, 1), needs);
  const int oid = out.id, zid = logits.id;
  im->node(out).forward_fn = [im, oid, zid, y]() {
    const Eigen::ArrayXd z = im->nodes[zid].value.col(0).array();
    // max(z,0) - y z + log1p(exp(-|z|))
    const Eigen::ArrayXd loss =
        z.max(0.0) - y->array() * z + (-z.abs()).exp().log1p();
    im->nodes[oid].value(0, 0) = loss.mean();
  };
  if (needs) {
    im->node(out).backward_fn = [im, oid, zid, y]() {
      const Eigen::ArrayXd z = im->nodes[zid].value.col(0).array();
      const Eigen::ArrayXd sig = z.unaryExpr([](double v) { return sigmoid(v); });
      im->adj(zid).col(0).array() +=
          im->nodes[oid].adjoint(0, 0) * (sig - y->array()) / static_cast<double>(z.size());
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::add(TapeTensor a, TapeTensor b) {
  return Impl::binary_op(impl_.get(), a, b, 0);
}
TapeTensor GradientTape::sub(TapeTensor a, TapeTensor b) {
  return Impl::binary_op(impl_.get(), a, b, 1);
}
TapeTensor GradientTape::mul(TapeTensor a, TapeTensor b) {
  return Impl::binary_op(impl_.get(), a, b, 2);
}

TapeTensor GradientTape::Impl::binary_op(Impl* im, TapeTensor a, TapeTensor b, int kind) {
  const Eigen::MatrixXd& va = im->nodes[a.id].value;
  const Eigen::MatrixXd& vb = im->nodes[b.id].value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw ShapeError("elementwise op: shape mismatch");
  }
  const bool ga = im->nodes[a.id].needs_grad, gb = im->nodes[b.id].needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(va.rows(), va.cols()), ga || gb);
  const int oid = out.id, aid = a.id, bid = b.id;
  im->nodes[oid].forward_fn = [im, oid, aid, bid, kind]() {
    const Eigen::MatrixXd& x = im->nodes[aid].value;
    const Eigen::MatrixXd& y = im->nodes[bid].value;
    if (kind == 0) im->nodes[oid].value = x + y;
    if (kind == 1) im->nodes[oid].value = x - y;
    if (kind == 2) im->nodes[oid].value = x.cwiseProduct(y);
  };
  if (ga || gb) {
    im->nodes[oid].backward_fn = [im, oid, aid, bid, kind, ga, gb]() {
      const Eigen::MatrixXd& d = im->nodes[oid].adjoint;
      if (kind == 0) {
        if (ga) im->adj(aid) += d;
        if (gb) im->adj(bid) += d;
      } else if (kind == 1) {
        if (ga) im->adj(aid) += d;
        if (gb) im->adj(bid) -= d;
      } else {
        if (ga) im->adj(aid) += d.cwiseProduct(im->nodes[bid].value);
        if (gb) im->adj(bid) += d.cwiseProduct(im->nodes[aid].value);
      }
    };
  }
  im->nodes[oid].forward_fn();
  return out;
}

TapeTensor GradientTape::scale(TapeTensor a, double factor) {
  Impl* im = impl_.get();
  const bool needs = im->node(a).needs_grad;
  const Eigen::MatrixXd& va = im->node(a).value;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(va.rows(), va.cols()), needs);
  const int oid = out.id, aid = a.id;
  im->node(out).forward_fn = [im, oid, aid, factor]() {
    im->nodes[oid].value = factor * im->nodes[aid].value;
  };
  if (needs) {
    im->node(out).backward_fn = [im, oid, aid, factor]() {
      im->adj(aid) += factor * im->nodes[oid].adjoint;
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::sum(TapeTensor a) {
  Impl* im = impl_.get();
  const bool needs = im->node(a).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(1, 1), needs);
  const int oid = out.id, aid = a.id;
  im->node(out).forward_fn = [im, oid, aid]() {
    im->nodes[oid].value(0, 0) = im->nodes[aid].value.sum();
  };
  if (needs) {
    im->node(out).backward_fn = [im, oid, aid]() {
      im->adj(aid).array() += im->nodes[oid].adjoint(0, 0);
    };
  }
  im->node(out).forward_fn();
  return out;
}

TapeTensor GradientTape::sum_squares(TapeTensor a) {
  Impl* im = impl_.get();
  const bool needs = im->node(a).needs_grad;
  TapeTensor out = im->push(Eigen::MatrixXd::Zero(1, 1), needs);
  const int oid = out.id, aid = a.id;
  im->node(out).forward_fn = [im, oid, aid]() {
    im->nodes[oid].value(0, 0) = im->nodes[aid].value.squaredNorm();
  };
  if (needs) {
    im->node(out).backward_fn = [im, oid, aid]() {
      im->adj(aid) += 2.0 * im->nodes[oid].adjoint(0, 0) * im->nodes[aid].value;
    };
  }
  im->node(out).forward_fn();
  return out;
}

void GradientTape::forward() {
  for (Impl::Node& n : impl_->nodes) {
    if (n.forward_fn) n.forward_fn();
  }
}

void GradientTape::backward(TapeTensor loss, double loss_adjoint) {
  Impl* im = impl_.get();
  if (loss.id < 0 || loss.id >= static_cast<int>(im->nodes.size())) {
    throw ContractError("backward: invalid loss node");
  }
  if (im->nodes[loss.id].value.size() != 1) {
    throw ContractError("backward: loss must be scalar");
  }
  for (Impl::Node& n : im->nodes) n.adjoint_set = false;
  for (Impl::Slot& s : im->slots) s.grad.setZero();
  im->adj(loss.id)(0, 0) = loss_adjoint;
  for (int id = loss.id; id >= 0; --id) {
    Impl::Node& n = im->nodes[id];
    if (n.adjoint_set && n.needs_grad && n.backward_fn) n.backward_fn();
  }
}

const Eigen::VectorXd& GradientTape::grad(ParamSlot slot) const {
  return impl_->slots[slot.id].grad;
}

const Eigen::MatrixXd& GradientTape::grad(TapeTensor leaf) const {
  const Impl::Node& n = impl_->node(leaf);
  if (!n.adjoint_set) {
    static const Eigen::MatrixXd empty;
    if (n.adjoint.size() == 0) {
      const_cast<Impl::Node&>(n).adjoint = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    }
  }
  return n.adjoint;
}

}  // namespace colt
