#include "hdccf/scoring.h"

#include "hdccf/error.h"
#include "hdccf/parallel.h"

namespace hdccf {

namespace {

using EIdx = Eigen::Index;
using Eigen::MatrixXd;

// One direction of the user-item scores. For the item side the anchor is the
// user u_k and the pool holds items; the user side mirrors it.
struct Side {
  const RowMatrix* anchor_emb;
  const RowMatrix* anchor_factor;
  const RowMatrix* pool_emb;
  const RowMatrix* pool_factor;
  EIdx anchor_off;
  EIdx pool_off;
  const std::vector<hdccf::Index>* pool;
  const std::vector<std::uint32_t>* slots;
  bool anchor_is_user;

  hdccf::Index anchor(const Batch& b, std::size_t k) const { return anchor_is_user ? b.pairs[k].user : b.pairs[k].item; }
  std::uint32_t slot(const Batch& b, std::size_t r, std::size_t k) const { return (*slots)[k * b.rows() + r]; }
};

Side item_side(const ModelParams& p, const Batch& b) {
  const auto d = static_cast<EIdx>(p.dim);
  return {&p.user_emb, &p.user_factor, &p.item_emb, &p.item_factor, d, 0, &b.pool_items, &b.item_slots, true};
}

Side user_side(const ModelParams& p, const Batch& b) {
  const auto d = static_cast<EIdx>(p.dim);
  return {&p.item_emb, &p.item_factor, &p.user_emb, &p.user_factor, 0, d, &b.pool_users, &b.user_slots, false};
}

struct SideGrads {
  SparseRowGrad* anchor_emb;
  SparseRowGrad* anchor_factor;
  SparseRowGrad* pool_emb;
  SparseRowGrad* pool_factor;
};

SideGrads side_grads(GradientBuffer& g, bool anchor_is_user) {
  if (anchor_is_user) return {&g.user_emb, &g.user_factor, &g.item_emb, &g.item_factor};
  return {&g.item_emb, &g.item_factor, &g.user_emb, &g.user_factor};
}

// Vectorized logistic; exp(-x) overflowing to inf still yields 0.
MatrixXd sigmoid_of(const MatrixXd& pre) {
  return (1.0 + (-pre.array()).exp()).inverse().matrix();
}

// Per-batch quantities shared by all anchors of a side.
struct SideShared {
  MatrixXd pool_factor;  // d x |pool|
  MatrixXd pool_pre;     // W_pool^T e for every pool slot
};

SideShared share(const ModelParams& p, const Side& s, bool modulated) {
  SideShared out;
  if (!modulated) return out;
  const auto d = static_cast<EIdx>(p.dim);
  const auto n = static_cast<EIdx>(s.pool->size());
  out.pool_factor.resize(d, n);
  for (EIdx c = 0; c < n; ++c) out.pool_factor.col(c) = s.pool_factor->row((*s.pool)[c]).transpose();
  out.pool_pre.noalias() = p.mod_weights.middleRows(s.pool_off, d).transpose() * out.pool_factor;
  return out;
}

// Anchors [begin, end) of one side laid side by side: column b * rows + r
// holds row r of anchor begin + b.
struct Stacked {
  std::size_t begin = 0;
  std::size_t count = 0;
  EIdx rows = 0;
  MatrixXd emb;     // pool embeddings
  MatrixXd factor;  // pool factors
  MatrixXd scaled;  // pool factors times the anchor factor
  MatrixXd anchor_emb;
  MatrixXd anchor_factor;
  std::vector<std::uint32_t> slots;
};

Stacked stack(const Side& s, const SideShared& sh, const Batch& b, std::size_t begin, std::size_t end,
              bool modulated) {
  Stacked st;
  st.begin = begin;
  st.count = end - begin;
  st.rows = static_cast<EIdx>(b.rows());
  const auto d = s.pool_emb->cols();
  const EIdx n = st.rows * static_cast<EIdx>(st.count);
  st.emb.resize(d, n);
  st.anchor_emb.resize(d, static_cast<EIdx>(st.count));
  st.slots.resize(static_cast<std::size_t>(n));
  if (modulated) {
    st.factor.resize(d, n);
    st.scaled.resize(d, n);
    st.anchor_factor.resize(d, static_cast<EIdx>(st.count));
  }
  for (std::size_t q = 0; q < st.count; ++q) {
    const std::size_t k = begin + q;
    const hdccf::Index a = s.anchor(b, k);
    const auto qc = static_cast<EIdx>(q);
    st.anchor_emb.col(qc) = s.anchor_emb->row(a).transpose();
    if (modulated) st.anchor_factor.col(qc) = s.anchor_factor->row(a).transpose();
    for (EIdx r = 0; r < st.rows; ++r) {
      const EIdx col = qc * st.rows + r;
      const auto slot = s.slot(b, static_cast<std::size_t>(r), k);
      st.slots[static_cast<std::size_t>(col)] = slot;
      st.emb.col(col) = s.pool_emb->row((*s.pool)[slot]).transpose();
      if (modulated) {
        st.factor.col(col) = sh.pool_factor.col(slot);
        st.scaled.col(col) = (st.factor.col(col).array() * st.anchor_factor.col(qc).array()).matrix();
      }
    }
  }
  return st;
}

// m for every stacked column.
MatrixXd modulation_stacked(const ModelParams& p, const Side& s, const SideShared& sh, const Stacked& st) {
  const auto d = static_cast<EIdx>(p.dim);
  MatrixXd pre(d, st.emb.cols());
  pre.noalias() = p.product_block().transpose() * st.scaled;
  MatrixXd anchor_pre = p.mod_weights.middleRows(s.anchor_off, d).transpose() * st.anchor_factor;
  anchor_pre.colwise() += p.mod_bias;
  for (EIdx c = 0; c < pre.cols(); ++c) {
    pre.col(c) += sh.pool_pre.col(st.slots[static_cast<std::size_t>(c)]) + anchor_pre.col(c / st.rows);
  }
  return sigmoid_of(pre);
}

void forward_side(const ModelParams& p, const Side& s, const SideShared& sh, const Batch& b, std::size_t begin,
                  std::size_t end, bool modulated, Eigen::MatrixXd& out_block, MatrixXd* cache) {
  if (begin == end) return;
  Stacked st = stack(s, sh, b, begin, end, modulated);
  MatrixXd weighted;
  if (modulated) {
    MatrixXd m = modulation_stacked(p, s, sh, st);
    weighted = (m.array().square() * st.emb.array()).matrix();
    if (cache != nullptr) cache->middleCols(static_cast<EIdx>(begin) * st.rows, m.cols()) = m;
  } else {
    weighted = std::move(st.emb);
  }
  for (std::size_t q = 0; q < st.count; ++q) {
    const auto qc = static_cast<EIdx>(q);
    out_block.col(static_cast<EIdx>(begin + q)).noalias() =
        weighted.middleCols(qc * st.rows, st.rows).transpose() * st.anchor_emb.col(qc);
  }
}

// Accumulators for the pool columns of one worker.
struct PoolAccum {
  MatrixXd emb_grad;     // d x |pool|
  MatrixXd factor_grad;  // d x |pool|
  MatrixXd delta_sum;    // d x |pool|

  void init(EIdx d, EIdx n, bool modulated) {
    emb_grad = MatrixXd::Zero(d, n);
    if (modulated) {
      factor_grad = MatrixXd::Zero(d, n);
      delta_sum = MatrixXd::Zero(d, n);
    }
  }
  void add(const PoolAccum& o, bool modulated) {
    emb_grad += o.emb_grad;
    if (modulated) {
      factor_grad += o.factor_grad;
      delta_sum += o.delta_sum;
    }
  }
};

void backward_side(const ModelParams& p, const Side& s, const SideShared& sh, const Batch& b, std::size_t begin,
                   std::size_t end, const Eigen::MatrixXd& grad_block, bool modulated, const MatrixXd* cache,
                   GradientBuffer& gb, PoolAccum& acc) {
  if (begin == end) return;
  if (grad_block.middleCols(static_cast<EIdx>(begin), static_cast<EIdx>(end - begin)).isZero(0.0)) return;
  Stacked st = stack(s, sh, b, begin, end, modulated);
  SideGrads sg = side_grads(gb, s.anchor_is_user);
  const auto d = static_cast<EIdx>(p.dim);
  const EIdx n = st.emb.cols();
  Eigen::RowVectorXd g(n);
  for (std::size_t q = 0; q < st.count; ++q) {
    g.segment(static_cast<EIdx>(q) * st.rows, st.rows) = grad_block.col(static_cast<EIdx>(begin + q)).transpose();
  }

  if (!modulated) {
    for (std::size_t q = 0; q < st.count; ++q) {
      const auto qc = static_cast<EIdx>(q);
      const hdccf::Index a = s.anchor(b, begin + q);
      sg.anchor_emb->row(a) += (st.emb.middleCols(qc * st.rows, st.rows) * g.segment(qc * st.rows, st.rows).transpose()).transpose();
    }
    for (EIdx c = 0; c < n; ++c) {
      if (g(c) != 0.0) acc.emb_grad.col(st.slots[static_cast<std::size_t>(c)]) += g(c) * st.anchor_emb.col(c / st.rows);
    }
    return;
  }

  MatrixXd m = cache != nullptr ? MatrixXd(cache->middleCols(static_cast<EIdx>(begin) * st.rows, n))
                                : modulation_stacked(p, s, sh, st);
  Eigen::ArrayXXd msq = m.array().square();
  MatrixXd weighted = (msq * st.emb.array()).matrix();
  // d f / d pre = 2 m^2 (1 - m) p q, scaled by the upstream gradient
  MatrixXd delta = (2.0 * msq * (1.0 - m.array()) * st.emb.array()).matrix();
  for (EIdx c = 0; c < n; ++c) {
    const EIdx q = c / st.rows;
    delta.col(c).array() *= st.anchor_emb.col(q).array() * g(c);
    const auto slot = st.slots[static_cast<std::size_t>(c)];
    if (g(c) != 0.0) acc.emb_grad.col(slot) += g(c) * (msq.col(c) * st.anchor_emb.col(q).array()).matrix();
    acc.delta_sum.col(slot) += delta.col(c);
  }
  MatrixXd delta1(d, static_cast<EIdx>(st.count));
  for (std::size_t q = 0; q < st.count; ++q) {
    const auto qc = static_cast<EIdx>(q);
    const hdccf::Index a = s.anchor(b, begin + q);
    sg.anchor_emb->row(a) += (weighted.middleCols(qc * st.rows, st.rows) * g.segment(qc * st.rows, st.rows).transpose()).transpose();
    delta1.col(qc) = delta.middleCols(qc * st.rows, st.rows).rowwise().sum();
  }

  gb.mod_bias += delta1.rowwise().sum();
  gb.mod_weights.middleRows(s.anchor_off, d).noalias() += st.anchor_factor * delta1.transpose();
  gb.mod_weights.bottomRows(d).noalias() += st.scaled * delta.transpose();
  gb.mod_touched = true;

  MatrixXd h(d, n);
  h.noalias() = p.product_block() * delta;
  MatrixXd anchor_dx(d, static_cast<EIdx>(st.count));
  anchor_dx.noalias() = p.mod_weights.middleRows(s.anchor_off, d) * delta1;
  Eigen::ArrayXXd fh = st.factor.array() * h.array();
  for (EIdx c = 0; c < n; ++c) {
    const EIdx q = c / st.rows;
    acc.factor_grad.col(st.slots[static_cast<std::size_t>(c)]) += (st.anchor_factor.col(q).array() * h.col(c).array()).matrix();
  }
  for (std::size_t q = 0; q < st.count; ++q) {
    const auto qc = static_cast<EIdx>(q);
    const hdccf::Index a = s.anchor(b, begin + q);
    Eigen::VectorXd dea = anchor_dx.col(qc) + fh.middleCols(qc * st.rows, st.rows).rowwise().sum().matrix();
    sg.anchor_factor->row(a) += dea.transpose();
  }
}

void finish_side(const ModelParams& p, const Side& s, const SideShared& sh, bool modulated, PoolAccum& acc,
                 GradientBuffer& out) {
  const auto d = static_cast<EIdx>(p.dim);
  SideGrads sg = side_grads(out, s.anchor_is_user);
  if (modulated) {
    out.mod_weights.middleRows(s.pool_off, d).noalias() += sh.pool_factor * acc.delta_sum.transpose();
    acc.factor_grad.noalias() += p.mod_weights.middleRows(s.pool_off, d) * acc.delta_sum;
    out.mod_touched = true;
  }
  for (std::size_t c = 0; c < s.pool->size(); ++c) {
    const auto col = static_cast<EIdx>(c);
    const hdccf::Index e = (*s.pool)[c];
    if (!acc.emb_grad.col(col).isZero(0.0)) sg.pool_emb->row(e) += acc.emb_grad.col(col).transpose();
    if (modulated && !acc.factor_grad.col(col).isZero(0.0)) {
      sg.pool_factor->row(e) += acc.factor_grad.col(col).transpose();
    }
  }
}

void check_batch(const ModelParams& params, const Batch& batch) {
  if (batch.size() == 0) throw ConfigError("empty batch");
  if (batch.item_slots.size() != batch.size() * batch.rows() || batch.user_slots.size() != batch.item_slots.size()) {
    throw ConfigError("batch slot tables do not match its shape");
  }
  for (const auto& pr : batch.pairs) {
    if (pr.user >= params.n_users() || pr.item >= params.n_items()) throw ConfigError("batch pair out of range");
  }
}

}  // namespace

BatchScores score_batch(const ModelParams& params, const Batch& batch, bool modulated, std::size_t threads,
                        ScoreCache* cache) {
  check_batch(params, batch);
  const std::size_t m = batch.size();
  BatchScores s = BatchScores::zeros(m, batch.n_pos, batch.n_neg);
  const Side is = item_side(params, batch);
  const Side us = user_side(params, batch);
  const SideShared ish = share(params, is, modulated);
  const SideShared ush = share(params, us, modulated);
  const auto cols = static_cast<EIdx>(m * batch.rows());
  if (cache != nullptr) {
    cache->item_side.resize(modulated ? static_cast<EIdx>(params.dim) : 0, modulated ? cols : 0);
    cache->user_side.resize(cache->item_side.rows(), cache->item_side.cols());
  }
  parallel_chunks(m, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    forward_side(params, is, ish, batch, begin, end, modulated, s.items, cache ? &cache->item_side : nullptr);
    forward_side(params, us, ush, batch, begin, end, modulated, s.users, cache ? &cache->user_side : nullptr);
    for (std::size_t k = begin; k < end; ++k) {
      const auto u = batch.pairs[k].user;
      const auto i = batch.pairs[k].item;
      const auto col = static_cast<EIdx>(k);
      s.anchor(col) = similarity(u, i, params, modulated);
      for (std::size_t r = 0; r < batch.rows(); ++r) {
        const auto row = static_cast<EIdx>(r);
        s.uu(row, col) = user_similarity(u, batch.user_at(r, k), params);
        s.ii(row, col) = item_similarity(i, batch.item_at(r, k), params);
      }
    }
  });
  return s;
}

void backprop_batch(const ModelParams& params, const Batch& batch, const BatchScores& grad, bool modulated,
                    GradientBuffer& out, std::size_t threads, const ScoreCache* cache) {
  check_batch(params, batch);
  const std::size_t m = batch.size();
  if (grad.size() != m || grad.n_pos != batch.n_pos || grad.n_neg != batch.n_neg) {
    throw ConfigError("gradient layout does not match the batch");
  }
  if (cache != nullptr && modulated &&
      (cache->item_side.cols() != static_cast<EIdx>(m * batch.rows()) || cache->user_side.cols() != cache->item_side.cols())) {
    throw ConfigError("score cache does not match the batch");
  }
  const Side is = item_side(params, batch);
  const Side us = user_side(params, batch);
  const SideShared ish = share(params, is, modulated);
  const SideShared ush = share(params, us, modulated);
  const auto d = static_cast<EIdx>(params.dim);

  const std::size_t workers = chunk_count(m, threads);
  std::vector<GradientBuffer> buffers;
  std::vector<PoolAccum> item_acc(workers);
  std::vector<PoolAccum> user_acc(workers);
  buffers.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    buffers.emplace_back(params);
    item_acc[w].init(d, static_cast<EIdx>(batch.pool_items.size()), modulated);
    user_acc[w].init(d, static_cast<EIdx>(batch.pool_users.size()), modulated);
  }

  parallel_chunks(m, workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    GradientBuffer& gb = buffers[w];
    backward_side(params, is, ish, batch, begin, end, grad.items, modulated, cache ? &cache->item_side : nullptr, gb,
                  item_acc[w]);
    backward_side(params, us, ush, batch, begin, end, grad.users, modulated, cache ? &cache->user_side : nullptr, gb,
                  user_acc[w]);
    for (std::size_t k = begin; k < end; ++k) {
      const auto u = batch.pairs[k].user;
      const auto i = batch.pairs[k].item;
      const auto col = static_cast<EIdx>(k);
      similarity_backward(u, i, params, grad.anchor(col), modulated, gb);
      for (std::size_t r = 0; r < batch.rows(); ++r) {
        const auto row = static_cast<EIdx>(r);
        user_similarity_backward(u, batch.user_at(r, k), params, grad.uu(row, col), gb);
        item_similarity_backward(i, batch.item_at(r, k), params, grad.ii(row, col), gb);
      }
    }
  });

  for (std::size_t w = 1; w < workers; ++w) {
    item_acc[0].add(item_acc[w], modulated);
    user_acc[0].add(user_acc[w], modulated);
  }
  for (auto& b : buffers) out.add(b);
  finish_side(params, is, ish, modulated, item_acc[0], out);
  finish_side(params, us, ush, modulated, user_acc[0], out);
}

}  // namespace hdccf

namespace hdccf {

ItemScorer::ItemScorer(const ModelParams& params, bool modulated) : params_(&params), modulated_(modulated) {
  item_emb_t_ = params.item_emb.transpose();
  if (modulated) {
    item_factor_t_ = params.item_factor.transpose();
    item_pre_.noalias() = params.item_block().transpose() * item_factor_t_;
  }
}

Eigen::VectorXd ItemScorer::scores(Index user) const {
  const auto& p = *params_;
  Eigen::VectorXd pu = p.user_emb.row(user).transpose();
  if (!modulated_) return item_emb_t_.transpose() * pu;
  Eigen::VectorXd eu = p.user_factor.row(user).transpose();
  Eigen::MatrixXd b = (eu.asDiagonal() * p.product_block()).transpose();
  Eigen::VectorXd cvec = p.user_block().transpose() * eu + p.mod_bias;
  Eigen::MatrixXd pre = item_pre_;
  pre.noalias() += b * item_factor_t_;
  pre.colwise() += cvec;
  Eigen::ArrayXXd m = (1.0 + (-pre.array()).exp()).inverse();
  Eigen::ArrayXXd weighted = m.square() * item_emb_t_.array();
  return weighted.matrix().transpose() * pu;
}

}  // namespace hdccf
