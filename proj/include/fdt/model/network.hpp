#ifndef FDT_MODEL_NETWORK_HPP_
#define FDT_MODEL_NETWORK_HPP_

#include <cmath>
#include <limits>
#include <vector>

#include "fdt/grid/observe.hpp"
#include "fdt/model/params.hpp"

namespace fdt::model {

inline constexpr double kLnEps = 1e-5;

// One timestep's raw inputs. Sentence fields index into the batch sentence
// matrix; kPlaceholderSentence selects the fixed placeholder embedding.
inline constexpr int kPlaceholderSentence = -2;
inline constexpr int kNoSentence = -1;

struct StepInput {
  grid::Observation obs;
  int action = -1;  // -1: not yet taken (inference tail)
  double rtg = 0.0;
  int mission_sentence = kNoSentence;
  int feedback_sentence = kNoSentence;
  int timestep = 0;
};

// Token blocks per timestep in fixed order [rtg, mission, feedback,
// observation, action]; every token of a timestep shares its positional
// index. Windows are left-padded to a common length.
template <typename S>
struct SequenceBatch {
  int batch = 0;
  int steps = 0;            // padded timesteps per element
  int tokens_per_step = 0;  // M
  Mat<S> obs;               // kViewFlat x (batch*steps), channel-major planes
  Mat<S> rtg;               // 1 x (batch*steps) when rtg is active
  Mat<S> action_onehot;     // action_count x (batch*steps)
  Mat<S> sentence_base;     // lang_src_dim x n_sentences (frozen)
  std::vector<int> mission_id;    // per slot
  std::vector<int> feedback_id;   // per slot; kPlaceholderSentence -> buffer
  std::vector<int> timestep;      // per slot
  std::vector<char> valid;        // per slot
  std::vector<char> has_action;   // per slot
  std::vector<int> target;        // per slot; -1 = no loss

  int slots() const { return batch * steps; }
  int tokens() const { return slots() * tokens_per_step; }
  int obs_token() const { return tokens_per_step - 2; }

  bool token_valid(int slot, int m) const {
    if (!valid[static_cast<std::size_t>(slot)]) return false;
    if (m == tokens_per_step - 1) return has_action[static_cast<std::size_t>(slot)] != 0;
    return true;
  }
};

// Converts the row-major [y][x][ch] observation into channel-major planes.
template <typename S>
void obs_to_column(const grid::Observation& o, Eigen::Ref<Vec<S>> col) {
  for (int c = 0; c < grid::kViewChannels; ++c) {
    for (int y = 0; y < grid::kViewSize; ++y) {
      for (int x = 0; x < grid::kViewSize; ++x) {
        col[c * 49 + y * 7 + x] = static_cast<S>(o.at(x, y, c));
      }
    }
  }
}

// Assembles windows (one vector of timesteps per batch element, each at most
// K steps) into a left-padded batch.
template <typename S>
SequenceBatch<S> assemble_sequence(const VariantSpec& variant,
                                   const std::vector<std::vector<StepInput>>& windows,
                                   const Mat<S>& sentence_base, int action_count = 6) {
  SequenceBatch<S> batch;
  batch.batch = static_cast<int>(windows.size());
  batch.steps = 1;
  for (const auto& w : windows) {
    batch.steps = std::max(batch.steps, static_cast<int>(w.size()));
  }
  batch.tokens_per_step = variant.tokens_per_step();
  const int nbt = batch.slots();
  batch.obs.setZero(kViewFlat, nbt);
  if (variant.use_rtg) batch.rtg.setZero(1, nbt);
  batch.action_onehot.setZero(action_count, nbt);
  batch.sentence_base = sentence_base;
  batch.mission_id.assign(static_cast<std::size_t>(nbt), kNoSentence);
  batch.feedback_id.assign(static_cast<std::size_t>(nbt), kNoSentence);
  batch.timestep.assign(static_cast<std::size_t>(nbt), 0);
  batch.valid.assign(static_cast<std::size_t>(nbt), 0);
  batch.has_action.assign(static_cast<std::size_t>(nbt), 0);
  batch.target.assign(static_cast<std::size_t>(nbt), -1);

  for (int b = 0; b < batch.batch; ++b) {
    const auto& w = windows[static_cast<std::size_t>(b)];
    const int pad = batch.steps - static_cast<int>(w.size());
    for (int i = 0; i < static_cast<int>(w.size()); ++i) {
      const StepInput& in = w[static_cast<std::size_t>(i)];
      const int slot = b * batch.steps + pad + i;
      batch.valid[static_cast<std::size_t>(slot)] = 1;
      batch.timestep[static_cast<std::size_t>(slot)] = in.timestep;
      obs_to_column<S>(in.obs, batch.obs.col(slot));
      if (variant.use_rtg) batch.rtg(0, slot) = static_cast<S>(in.rtg);
      if (variant.use_mission) batch.mission_id[static_cast<std::size_t>(slot)] = in.mission_sentence;
      if (variant.use_feedback) batch.feedback_id[static_cast<std::size_t>(slot)] = in.feedback_sentence;
      if (in.action >= 0) {
        batch.has_action[static_cast<std::size_t>(slot)] = 1;
        batch.action_onehot(in.action, slot) = static_cast<S>(1);
        batch.target[static_cast<std::size_t>(slot)] = in.action;
      }
    }
  }
  return batch;
}

namespace detail {

// Column-wise layer norm; caches mean and reciprocal stddev per column.
template <typename S>
void layernorm_forward(const Mat<S>& x, const Vec<S>& g, const Vec<S>& b, Mat<S>& y,
                       Vec<S>& mu, Vec<S>& rstd) {
  const Eigen::Index n = x.cols();
  const Eigen::Index h = x.rows();
  y.resize(h, n);
  mu.resize(n);
  rstd.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const S m = x.col(j).mean();
    const S var = (x.col(j).array() - m).square().sum() / static_cast<S>(h);
    const S r = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
    mu[j] = m;
    rstd[j] = r;
    y.col(j) = ((x.col(j).array() - m) * r).matrix().cwiseProduct(g) + b;
  }
}

template <typename S>
void layernorm_backward(const Mat<S>& x, const Vec<S>& g, const Vec<S>& mu, const Vec<S>& rstd,
                        const Mat<S>& dy, Mat<S>& dx, Vec<S>& dg, Vec<S>& db) {
  const Eigen::Index n = x.cols();
  const Eigen::Index h = x.rows();
  dx.resize(h, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto xhat = ((x.col(j).array() - mu[j]) * rstd[j]).eval();
    const auto q = (dy.col(j).cwiseProduct(g)).array().eval();
    const S mean_q = q.mean();
    const S mean_qx = (q * xhat).mean();
    dx.col(j) = ((q - mean_q - xhat * mean_qx) * rstd[j]).matrix();
    dg += dy.col(j).cwiseProduct(xhat.matrix());
    db += dy.col(j);
  }
}

inline int conv_out(int n) { return n - 1; }

// Gathers 2x2 patches of a channel-major (C x H x W) activation stored as
// (C x slots*H*W is not the layout; activations live as (C x slots*HW) with
// column slot*HW + y*W + x). Output: (C*4 x slots*OH*OW).
template <typename S>
void im2col(const Mat<S>& act, int channels, int hw_h, int hw_w, int slots, Mat<S>& out) {
  const int oh = conv_out(hw_h), ow = conv_out(hw_w);
  out.resize(channels * 4, static_cast<Eigen::Index>(slots) * oh * ow);
  for (int s = 0; s < slots; ++s) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = static_cast<Eigen::Index>(s) * oh * ow + oy * ow + ox;
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            const Eigen::Index src =
                static_cast<Eigen::Index>(s) * hw_h * hw_w + (oy + ky) * hw_w + (ox + kx);
            for (int c = 0; c < channels; ++c) {
              out(c * 4 + ky * 2 + kx, col) = act(c, src);
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const Mat<S>& dcols, int channels, int hw_h, int hw_w, int slots, Mat<S>& dact) {
  const int oh = conv_out(hw_h), ow = conv_out(hw_w);
  dact.setZero(channels, static_cast<Eigen::Index>(slots) * hw_h * hw_w);
  for (int s = 0; s < slots; ++s) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = static_cast<Eigen::Index>(s) * oh * ow + oy * ow + ox;
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            const Eigen::Index dst =
                static_cast<Eigen::Index>(s) * hw_h * hw_w + (oy + ky) * hw_w + (ox + kx);
            for (int c = 0; c < channels; ++c) {
              dact(c, dst) += dcols(c * 4 + ky * 2 + kx, col);
            }
          }
        }
      }
    }
  }
}

// Reshapes the flat observation batch (147 x slots) into channel-major
// activation layout (3 x slots*49).
template <typename S>
void obs_as_planes(const Mat<S>& obs, Mat<S>& planes) {
  const Eigen::Index slots = obs.cols();
  planes.resize(3, slots * 49);
  for (Eigen::Index s = 0; s < slots; ++s) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 49; ++i) {
        planes(c, s * 49 + i) = obs(c * 49 + i, s);
      }
    }
  }
}

}  // namespace detail

template <typename S>
struct LayerCache {
  Mat<S> x0;            // block input
  Mat<S> y1;            // ln1 output
  Vec<S> mu1, rstd1;
  Mat<S> q, k, v;       // h x N
  std::vector<Mat<S>> probs;       // per sample: (Tt x Tt), post-dropout
  std::vector<Mat<S>> drop_attn;   // per sample scaled dropout mask (empty when off)
  Mat<S> attn_concat;   // h x N, heads concatenated (pre-wo)
  Mat<S> drop_resid1;   // scaled mask (empty when off)
  Mat<S> x1;            // after attention residual
  Mat<S> y2;            // ln2 output
  Vec<S> mu2, rstd2;
  Mat<S> mlp_act;       // 4h x N, post-relu
  Mat<S> drop_resid2;
};

template <typename S>
struct Workspace {
  // conv caches
  Mat<S> planes0;       // 3 x slots*49
  Mat<S> cols0, cols1, cols2;  // im2col inputs per conv layer
  Mat<S> act1, act2, act3;     // post-relu conv activations
  Mat<S> flat;          // flattened conv output (1024 x slots)
  Mat<S> lang_proj;     // kLangWidth x n_sentences
  Mat<S> gather_m, gather_f;   // kLangWidth x slots
  Mat<S> tok_obs, tok_rtg, tok_mission, tok_feedback, tok_action;  // h x slots
  Mat<S> x_tokens;      // h x N assembled input (pre embed_ln)
  Mat<S> x_embedded;    // h x N post embed_ln
  Vec<S> mu_e, rstd_e;
  std::vector<LayerCache<S>> layers;
  Mat<S> x_final_in;    // input to ln_f
  Mat<S> x_final;       // post ln_f
  Vec<S> mu_f, rstd_f;
  Mat<S> obs_cols_hidden;  // h x slots gathered at obs tokens
  Mat<S> logits;        // action_count x slots
};

// Deterministic in eval mode; dropout draws from `rng` in train mode.
template <typename S>
const Mat<S>& forward(const Params<S>& p, const SequenceBatch<S>& batch, bool train_mode,
                      util::Rng* rng, Workspace<S>& ws) {
  const ModelConfig& cfg = p.cfg;
  const int h = cfg.hidden;
  const int nbt = batch.slots();
  const int M = batch.tokens_per_step;
  const int N = batch.tokens();
  const int heads = cfg.n_heads;
  const int dh = h / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool use_dropout = train_mode && cfg.dropout > 0.0 && rng != nullptr;
  const S keep = static_cast<S>(1.0 - cfg.dropout);

  auto make_drop_mask = [&](Mat<S>& mask, Eigen::Index rows, Eigen::Index cols) {
    mask.resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        mask(i, j) = rng->real01() < cfg.dropout ? S(0) : S(1) / keep;
      }
    }
  };

  // --- image encoder ---
  const auto& ch = cfg.conv_channels;
  detail::obs_as_planes(batch.obs, ws.planes0);
  detail::im2col(ws.planes0, 3, 7, 7, nbt, ws.cols0);
  ws.act1 = ((p.conv_w0 * ws.cols0).colwise() + p.conv_b0).cwiseMax(S(0));
  detail::im2col(ws.act1, ch[0], 6, 6, nbt, ws.cols1);
  ws.act2 = ((p.conv_w1 * ws.cols1).colwise() + p.conv_b1).cwiseMax(S(0));
  detail::im2col(ws.act2, ch[1], 5, 5, nbt, ws.cols2);
  ws.act3 = ((p.conv_w2 * ws.cols2).colwise() + p.conv_b2).cwiseMax(S(0));
  // flatten (C x 16) per slot into (16*C x 1), channel-major
  const int flat_dim = 16 * ch[2];
  ws.flat.resize(flat_dim, nbt);
  for (int s = 0; s < nbt; ++s) {
    for (int c = 0; c < ch[2]; ++c) {
      for (int i = 0; i < 16; ++i) {
        ws.flat(c * 16 + i, s) = ws.act3(c, static_cast<Eigen::Index>(s) * 16 + i);
      }
    }
  }
  ws.tok_obs = (p.obs_in_w * ws.flat).colwise() + p.obs_in_b;

  // --- language projection (the trainable downsampling of frozen vectors) ---
  if (p.variant.uses_language() && batch.sentence_base.cols() > 0) {
    ws.lang_proj = (p.lang_proj_w * batch.sentence_base).colwise() + p.lang_proj_b;
  } else {
    ws.lang_proj.resize(kLangWidth, 0);
  }
  auto gather_lang = [&](const std::vector<int>& ids, Mat<S>& out) {
    out.setZero(kLangWidth, nbt);
    for (int s = 0; s < nbt; ++s) {
      const int id = ids[static_cast<std::size_t>(s)];
      if (id >= 0) {
        out.col(s) = ws.lang_proj.col(id);
      } else if (id == kPlaceholderSentence) {
        out.col(s) = p.feedback_placeholder;
      }
    }
  };
  if (p.variant.use_mission) {
    gather_lang(batch.mission_id, ws.gather_m);
    ws.tok_mission = (p.mission_in_w * ws.gather_m).colwise() + p.mission_in_b;
  }
  if (p.variant.use_feedback) {
    gather_lang(batch.feedback_id, ws.gather_f);
    ws.tok_feedback = (p.feedback_in_w * ws.gather_f).colwise() + p.feedback_in_b;
  }
  if (p.variant.use_rtg) {
    ws.tok_rtg = (p.rtg_in_w * batch.rtg).colwise() + p.rtg_in_b;
  }
  ws.tok_action = (p.action_in_w * batch.action_onehot).colwise() + p.action_in_b;

  // --- token assembly with shared positional indices ---
  ws.x_tokens.setZero(h, N);
  for (int s = 0; s < nbt; ++s) {
    if (!batch.valid[static_cast<std::size_t>(s)]) continue;
    const int t_idx =
        std::min(batch.timestep[static_cast<std::size_t>(s)], cfg.max_timestep - 1);
    const auto pos = p.pos_emb.col(t_idx);
    int m = 0;
    const Eigen::Index base = static_cast<Eigen::Index>(s) * M;
    if (p.variant.use_rtg) ws.x_tokens.col(base + m++) = ws.tok_rtg.col(s) + pos;
    if (p.variant.use_mission) ws.x_tokens.col(base + m++) = ws.tok_mission.col(s) + pos;
    if (p.variant.use_feedback) ws.x_tokens.col(base + m++) = ws.tok_feedback.col(s) + pos;
    ws.x_tokens.col(base + m++) = ws.tok_obs.col(s) + pos;
    if (batch.has_action[static_cast<std::size_t>(s)]) {
      ws.x_tokens.col(base + m) = ws.tok_action.col(s) + pos;
    }
  }

  detail::layernorm_forward(ws.x_tokens, p.embed_ln_g, p.embed_ln_b, ws.x_embedded, ws.mu_e,
                            ws.rstd_e);

  // --- transformer blocks ---
  ws.layers.assign(static_cast<std::size_t>(cfg.n_layers), LayerCache<S>{});
  Mat<S> x = ws.x_embedded;
  const int Tt = batch.steps * M;
  constexpr S kNegInf = -std::numeric_limits<S>::infinity();

  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerCache<S>& lc = ws.layers[static_cast<std::size_t>(l)];
    const BlockParams<S>& bp = p.blocks[static_cast<std::size_t>(l)];
    lc.x0 = x;
    detail::layernorm_forward(lc.x0, bp.ln1_g, bp.ln1_b, lc.y1, lc.mu1, lc.rstd1);
    lc.q = (bp.wq * lc.y1).colwise() + bp.bq;
    lc.k = (bp.wk * lc.y1).colwise() + bp.bk;
    lc.v = (bp.wv * lc.y1).colwise() + bp.bv;
    lc.attn_concat.setZero(h, N);
    lc.probs.assign(static_cast<std::size_t>(batch.batch), Mat<S>());
    if (use_dropout) lc.drop_attn.assign(static_cast<std::size_t>(batch.batch), Mat<S>());

    for (int b = 0; b < batch.batch; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * Tt;
      Mat<S>& probs = lc.probs[static_cast<std::size_t>(b)];
      probs.resize(static_cast<Eigen::Index>(heads) * Tt, Tt);
      for (int hd = 0; hd < heads; ++hd) {
        const auto q = lc.q.block(hd * dh, off, dh, Tt);
        const auto k = lc.k.block(hd * dh, off, dh, Tt);
        const auto v = lc.v.block(hd * dh, off, dh, Tt);
        Mat<S> scores = (q.transpose() * k) * scale;  // (Tt queries) x (Tt keys)
        for (int qi = 0; qi < Tt; ++qi) {
          const int q_slot = b * batch.steps + qi / M;
          const bool q_ok = batch.token_valid(q_slot, qi % M);
          for (int ki = 0; ki < Tt; ++ki) {
            bool ok;
            if (!q_ok) {
              ok = ki == qi;  // keep the softmax defined on dead queries
            } else {
              const int k_slot = b * batch.steps + ki / M;
              ok = ki <= qi && batch.token_valid(k_slot, ki % M);
            }
            if (!ok) scores(qi, ki) = kNegInf;
          }
        }
        // row-wise softmax
        for (int qi = 0; qi < Tt; ++qi) {
          auto row = scores.row(qi);
          const S mx = row.maxCoeff();
          row = (row.array() - mx).exp();
          row /= row.sum();
        }
        auto prob_block = probs.block(static_cast<Eigen::Index>(hd) * Tt, 0, Tt, Tt);
        prob_block = scores;  // pre-dropout attention weights
        if (use_dropout) {
          Mat<S>& mask = lc.drop_attn[static_cast<std::size_t>(b)];
          if (mask.size() == 0) mask.resize(static_cast<Eigen::Index>(heads) * Tt, Tt);
          auto mask_block = mask.block(static_cast<Eigen::Index>(hd) * Tt, 0, Tt, Tt);
          for (Eigen::Index jj = 0; jj < Tt; ++jj) {
            for (Eigen::Index ii = 0; ii < Tt; ++ii) {
              mask_block(ii, jj) = rng->real01() < cfg.dropout ? S(0) : S(1) / keep;
            }
          }
          const Mat<S> p_eff = prob_block.cwiseProduct(mask_block);
          lc.attn_concat.block(hd * dh, off, dh, Tt).noalias() = v * p_eff.transpose();
        } else {
          lc.attn_concat.block(hd * dh, off, dh, Tt).noalias() =
              v * prob_block.transpose().eval();
        }
      }
    }
    Mat<S> attn_out = (bp.wo * lc.attn_concat).colwise() + bp.bo;
    if (use_dropout) {
      make_drop_mask(lc.drop_resid1, h, N);
      attn_out = attn_out.cwiseProduct(lc.drop_resid1);
    }
    lc.x1 = lc.x0 + attn_out;

    detail::layernorm_forward(lc.x1, bp.ln2_g, bp.ln2_b, lc.y2, lc.mu2, lc.rstd2);
    lc.mlp_act = ((bp.fc1 * lc.y2).colwise() + bp.fb1).cwiseMax(S(0));
    Mat<S> mlp_out = (bp.fc2 * lc.mlp_act).colwise() + bp.fb2;
    if (use_dropout) {
      make_drop_mask(lc.drop_resid2, h, N);
      mlp_out = mlp_out.cwiseProduct(lc.drop_resid2);
    }
    x = lc.x1 + mlp_out;
  }

  ws.x_final_in = x;
  detail::layernorm_forward(ws.x_final_in, p.ln_f_g, p.ln_f_b, ws.x_final, ws.mu_f, ws.rstd_f);

  // --- action logits, read at each timestep's observation token ---
  ws.obs_cols_hidden.resize(h, nbt);
  const int m_obs = batch.obs_token();
  for (int s = 0; s < nbt; ++s) {
    ws.obs_cols_hidden.col(s) = ws.x_final.col(static_cast<Eigen::Index>(s) * M + m_obs);
  }
  ws.logits = (p.head_w * ws.obs_cols_hidden).colwise() + p.head_b;
  return ws.logits;
}

struct LossResult {
  double loss = 0.0;
  long count = 0;
  long correct = 0;

  double accuracy() const { return count > 0 ? static_cast<double>(correct) / count : 0.0; }
};

// Mean cross-entropy over slots with target >= 0 (standard unweighted
// reduction). Fills dlogits when given.
template <typename S>
LossResult cross_entropy(const Mat<S>& logits, const std::vector<int>& targets,
                         Mat<S>* dlogits = nullptr) {
  LossResult res;
  for (int s = 0; s < logits.cols(); ++s) {
    if (targets[static_cast<std::size_t>(s)] >= 0) ++res.count;
  }
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  if (res.count == 0) return res;
  for (int s = 0; s < logits.cols(); ++s) {
    const int t = targets[static_cast<std::size_t>(s)];
    if (t < 0) continue;
    const auto col = logits.col(s);
    const S mx = col.maxCoeff();
    Vec<S> ex = (col.array() - mx).exp();
    const S sum = ex.sum();
    res.loss += static_cast<double>(std::log(sum) - (col[t] - mx));
    Eigen::Index argmax;
    col.maxCoeff(&argmax);
    if (static_cast<int>(argmax) == t) ++res.correct;
    if (dlogits) {
      dlogits->col(s) = ex / (sum * static_cast<S>(res.count));
      (*dlogits)(t, s) -= S(1) / static_cast<S>(res.count);
    }
  }
  res.loss /= static_cast<double>(res.count);
  return res;
}

// Accumulates parameter gradients for the forward pass cached in `ws`.
template <typename S>
void backward(const Params<S>& p, const SequenceBatch<S>& batch, const Workspace<S>& ws,
              const Mat<S>& dlogits, Params<S>& grads) {
  const ModelConfig& cfg = p.cfg;
  const int h = cfg.hidden;
  const int nbt = batch.slots();
  const int M = batch.tokens_per_step;
  const int N = batch.tokens();
  const int heads = cfg.n_heads;
  const int dh = h / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool had_dropout = !ws.layers.empty() && ws.layers[0].drop_resid1.size() > 0;

  // head
  grads.head_w += dlogits * ws.obs_cols_hidden.transpose();
  grads.head_b += dlogits.rowwise().sum();
  Mat<S> dx_final = Mat<S>::Zero(h, N);
  const int m_obs = batch.obs_token();
  for (int s = 0; s < nbt; ++s) {
    dx_final.col(static_cast<Eigen::Index>(s) * M + m_obs) =
        p.head_w.transpose() * dlogits.col(s);
  }

  Mat<S> dx;
  detail::layernorm_backward(ws.x_final_in, p.ln_f_g, ws.mu_f, ws.rstd_f, dx_final, dx,
                             grads.ln_f_g, grads.ln_f_b);

  const int Tt = batch.steps * M;
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerCache<S>& lc = ws.layers[static_cast<std::size_t>(l)];
    const BlockParams<S>& bp = p.blocks[static_cast<std::size_t>(l)];
    BlockParams<S>& bg = grads.blocks[static_cast<std::size_t>(l)];

    // x_out = x1 + drop(mlp_out)
    Mat<S> dmlp_out = had_dropout ? dx.cwiseProduct(lc.drop_resid2).eval() : dx;
    grads.blocks[static_cast<std::size_t>(l)].fc2 += dmlp_out * lc.mlp_act.transpose();
    bg.fb2 += dmlp_out.rowwise().sum();
    Mat<S> dact = bp.fc2.transpose() * dmlp_out;
    dact = dact.cwiseProduct((lc.mlp_act.array() > S(0)).template cast<S>().matrix());
    bg.fc1 += dact * lc.y2.transpose();
    bg.fb1 += dact.rowwise().sum();
    const Mat<S> dy2 = bp.fc1.transpose() * dact;

    Mat<S> dx1_from_ln2;
    detail::layernorm_backward(lc.x1, bp.ln2_g, lc.mu2, lc.rstd2, dy2, dx1_from_ln2, bg.ln2_g,
                               bg.ln2_b);
    Mat<S> dx1 = dx + dx1_from_ln2;

    // x1 = x0 + drop(wo * concat + bo)
    Mat<S> dattn_out = had_dropout ? dx1.cwiseProduct(lc.drop_resid1).eval() : dx1;
    bg.wo += dattn_out * lc.attn_concat.transpose();
    bg.bo += dattn_out.rowwise().sum();
    const Mat<S> dconcat = bp.wo.transpose() * dattn_out;

    Mat<S> dq = Mat<S>::Zero(h, N);
    Mat<S> dk = Mat<S>::Zero(h, N);
    Mat<S> dv = Mat<S>::Zero(h, N);
    for (int b = 0; b < batch.batch; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * Tt;
      const Mat<S>& probs = lc.probs[static_cast<std::size_t>(b)];
      for (int hd = 0; hd < heads; ++hd) {
        const auto q = lc.q.block(hd * dh, off, dh, Tt);
        const auto k = lc.k.block(hd * dh, off, dh, Tt);
        const auto v = lc.v.block(hd * dh, off, dh, Tt);
        const auto dO = dconcat.block(hd * dh, off, dh, Tt);
        const auto prob = probs.block(static_cast<Eigen::Index>(hd) * Tt, 0, Tt, Tt);
        Mat<S> p_eff = prob;
        if (had_dropout) {
          const auto mask =
              lc.drop_attn[static_cast<std::size_t>(b)].block(
                  static_cast<Eigen::Index>(hd) * Tt, 0, Tt, Tt);
          p_eff = prob.cwiseProduct(mask);
          dv.block(hd * dh, off, dh, Tt).noalias() += dO * p_eff;
          Mat<S> dp = (dO.transpose() * v).cwiseProduct(mask);
          // softmax backward per query row
          for (int qi = 0; qi < Tt; ++qi) {
            const S dot = dp.row(qi).cwiseProduct(prob.row(qi)).sum();
            dp.row(qi) = prob.row(qi).cwiseProduct(dp.row(qi).array().matrix() -
                                                   Mat<S>::Constant(1, Tt, dot));
          }
          dq.block(hd * dh, off, dh, Tt).noalias() += k * dp.transpose() * scale;
          dk.block(hd * dh, off, dh, Tt).noalias() += q * dp * scale;
        } else {
          dv.block(hd * dh, off, dh, Tt).noalias() += dO * prob;
          Mat<S> dp = dO.transpose() * v;
          for (int qi = 0; qi < Tt; ++qi) {
            const S dot = dp.row(qi).cwiseProduct(prob.row(qi)).sum();
            dp.row(qi) = prob.row(qi).cwiseProduct(dp.row(qi).array().matrix() -
                                                   Mat<S>::Constant(1, Tt, dot));
          }
          dq.block(hd * dh, off, dh, Tt).noalias() += k * dp.transpose() * scale;
          dk.block(hd * dh, off, dh, Tt).noalias() += q * dp * scale;
        }
      }
    }

    bg.wq += dq * lc.y1.transpose();
    bg.bq += dq.rowwise().sum();
    bg.wk += dk * lc.y1.transpose();
    bg.bk += dk.rowwise().sum();
    bg.wv += dv * lc.y1.transpose();
    bg.bv += dv.rowwise().sum();
    const Mat<S> dy1 =
        bp.wq.transpose() * dq + bp.wk.transpose() * dk + bp.wv.transpose() * dv;

    Mat<S> dx0_from_ln1;
    detail::layernorm_backward(lc.x0, bp.ln1_g, lc.mu1, lc.rstd1, dy1, dx0_from_ln1, bg.ln1_g,
                               bg.ln1_b);
    dx = dx1 + dx0_from_ln1;
  }

  Mat<S> dx_tokens;
  detail::layernorm_backward(ws.x_tokens, p.embed_ln_g, ws.mu_e, ws.rstd_e, dx, dx_tokens,
                             grads.embed_ln_g, grads.embed_ln_b);

  // un-assemble tokens into modality gradients
  Mat<S> dtok_obs = Mat<S>::Zero(h, nbt);
  Mat<S> dtok_rtg, dtok_mission, dtok_feedback;
  if (p.variant.use_rtg) dtok_rtg = Mat<S>::Zero(h, nbt);
  if (p.variant.use_mission) dtok_mission = Mat<S>::Zero(h, nbt);
  if (p.variant.use_feedback) dtok_feedback = Mat<S>::Zero(h, nbt);
  Mat<S> dtok_action = Mat<S>::Zero(h, nbt);
  for (int s = 0; s < nbt; ++s) {
    if (!batch.valid[static_cast<std::size_t>(s)]) continue;
    const Eigen::Index base = static_cast<Eigen::Index>(s) * M;
    const int t = std::min(batch.timestep[static_cast<std::size_t>(s)], cfg.max_timestep - 1);
    int m = 0;
    if (p.variant.use_rtg) {
      dtok_rtg.col(s) = dx_tokens.col(base + m);
      grads.pos_emb.col(t) += dx_tokens.col(base + m);
      ++m;
    }
    if (p.variant.use_mission) {
      dtok_mission.col(s) = dx_tokens.col(base + m);
      grads.pos_emb.col(t) += dx_tokens.col(base + m);
      ++m;
    }
    if (p.variant.use_feedback) {
      dtok_feedback.col(s) = dx_tokens.col(base + m);
      grads.pos_emb.col(t) += dx_tokens.col(base + m);
      ++m;
    }
    dtok_obs.col(s) = dx_tokens.col(base + m);
    grads.pos_emb.col(t) += dx_tokens.col(base + m);
    ++m;
    if (batch.has_action[static_cast<std::size_t>(s)]) {
      dtok_action.col(s) = dx_tokens.col(base + m);
      grads.pos_emb.col(t) += dx_tokens.col(base + m);
    }
  }

  grads.action_in_w += dtok_action * batch.action_onehot.transpose();
  grads.action_in_b += dtok_action.rowwise().sum();
  if (p.variant.use_rtg) {
    grads.rtg_in_w += dtok_rtg * batch.rtg.transpose();
    grads.rtg_in_b += dtok_rtg.rowwise().sum();
  }

  Mat<S> dlang_proj = Mat<S>::Zero(kLangWidth, ws.lang_proj.cols());
  auto scatter_lang = [&](const std::vector<int>& ids, const Mat<S>& dgather) {
    for (int s = 0; s < nbt; ++s) {
      const int id = ids[static_cast<std::size_t>(s)];
      if (id >= 0) dlang_proj.col(id) += dgather.col(s);
      // placeholder columns are an untrained buffer; their grads are dropped
    }
  };
  if (p.variant.use_mission) {
    grads.mission_in_w += dtok_mission * ws.gather_m.transpose();
    grads.mission_in_b += dtok_mission.rowwise().sum();
    scatter_lang(batch.mission_id, p.mission_in_w.transpose() * dtok_mission);
  }
  if (p.variant.use_feedback) {
    grads.feedback_in_w += dtok_feedback * ws.gather_f.transpose();
    grads.feedback_in_b += dtok_feedback.rowwise().sum();
    scatter_lang(batch.feedback_id, p.feedback_in_w.transpose() * dtok_feedback);
  }
  if (p.variant.uses_language() && dlang_proj.cols() > 0) {
    grads.lang_proj_w += dlang_proj * batch.sentence_base.transpose();
    grads.lang_proj_b += dlang_proj.rowwise().sum();
  }

  // image encoder
  grads.obs_in_w += dtok_obs * ws.flat.transpose();
  grads.obs_in_b += dtok_obs.rowwise().sum();
  const Mat<S> dflat = p.obs_in_w.transpose() * dtok_obs;
  const auto& ch = cfg.conv_channels;
  Mat<S> dact3(ch[2], static_cast<Eigen::Index>(nbt) * 16);
  for (int s = 0; s < nbt; ++s) {
    for (int c = 0; c < ch[2]; ++c) {
      for (int i = 0; i < 16; ++i) {
        dact3(c, static_cast<Eigen::Index>(s) * 16 + i) = dflat(c * 16 + i, s);
      }
    }
  }
  Mat<S> dz3 = dact3.cwiseProduct((ws.act3.array() > S(0)).template cast<S>().matrix());
  grads.conv_w2 += dz3 * ws.cols2.transpose();
  grads.conv_b2 += dz3.rowwise().sum();
  Mat<S> dcols2 = p.conv_w2.transpose() * dz3;
  Mat<S> dact2;
  detail::col2im_add(dcols2, ch[1], 5, 5, nbt, dact2);
  Mat<S> dz2 = dact2.cwiseProduct((ws.act2.array() > S(0)).template cast<S>().matrix());
  grads.conv_w1 += dz2 * ws.cols1.transpose();
  grads.conv_b1 += dz2.rowwise().sum();
  Mat<S> dcols1 = p.conv_w1.transpose() * dz2;
  Mat<S> dact1;
  detail::col2im_add(dcols1, ch[0], 6, 6, nbt, dact1);
  Mat<S> dz1 = dact1.cwiseProduct((ws.act1.array() > S(0)).template cast<S>().matrix());
  grads.conv_w0 += dz1 * ws.cols0.transpose();
  grads.conv_b0 += dz1.rowwise().sum();
}

// ---------------------------------------------------------------------------
// Incremental evaluation path: grows per-layer key/value caches token by
// token. Exact for episodes no longer than the context window; rollouts past
// that fall back to full-window recomputation.

template <typename S>
struct IncrementalState {
  int tokens = 0;
  std::vector<Mat<S>> k, v;  // per layer, hidden x capacity
};

template <typename S>
IncrementalState<S> make_incremental(const Params<S>& p, int token_capacity) {
  IncrementalState<S> st;
  st.k.resize(static_cast<std::size_t>(p.cfg.n_layers));
  st.v.resize(static_cast<std::size_t>(p.cfg.n_layers));
  for (int l = 0; l < p.cfg.n_layers; ++l) {
    st.k[static_cast<std::size_t>(l)].resize(p.cfg.hidden, token_capacity);
    st.v[static_cast<std::size_t>(l)].resize(p.cfg.hidden, token_capacity);
  }
  return st;
}

// Appends pre-assembled token inputs (positional embedding already added)
// and returns their post-ln_f hidden states.
template <typename S>
Mat<S> incremental_append(const Params<S>& p, IncrementalState<S>& st, const Mat<S>& x_new) {
  const int h = p.cfg.hidden;
  const int heads = p.cfg.n_heads;
  const int dh = h / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const Eigen::Index n_new = x_new.cols();

  Mat<S> x;
  Vec<S> mu, rstd;
  detail::layernorm_forward(x_new, p.embed_ln_g, p.embed_ln_b, x, mu, rstd);

  for (int l = 0; l < p.cfg.n_layers; ++l) {
    const BlockParams<S>& bp = p.blocks[static_cast<std::size_t>(l)];
    Mat<S> y1;
    detail::layernorm_forward(x, bp.ln1_g, bp.ln1_b, y1, mu, rstd);
    const Mat<S> q = (bp.wq * y1).colwise() + bp.bq;
    Mat<S>& kc = st.k[static_cast<std::size_t>(l)];
    Mat<S>& vc = st.v[static_cast<std::size_t>(l)];
    kc.middleCols(st.tokens, n_new) = (bp.wk * y1).colwise() + bp.bk;
    vc.middleCols(st.tokens, n_new) = (bp.wv * y1).colwise() + bp.bv;

    Mat<S> concat(h, n_new);
    for (Eigen::Index j = 0; j < n_new; ++j) {
      const int visible = st.tokens + static_cast<int>(j) + 1;
      for (int hd = 0; hd < heads; ++hd) {
        const auto kk = kc.block(hd * dh, 0, dh, visible);
        const auto vv = vc.block(hd * dh, 0, dh, visible);
        Vec<S> scores = (kk.transpose() * q.block(hd * dh, j, dh, 1)) * scale;
        const S mx = scores.maxCoeff();
        Vec<S> ex = (scores.array() - mx).exp();
        ex /= ex.sum();
        concat.block(hd * dh, j, dh, 1).noalias() = vv * ex;
      }
    }
    x += (bp.wo * concat).colwise() + bp.bo;

    Mat<S> y2;
    detail::layernorm_forward(x, bp.ln2_g, bp.ln2_b, y2, mu, rstd);
    const Mat<S> act = ((bp.fc1 * y2).colwise() + bp.fb1).cwiseMax(S(0));
    x += (bp.fc2 * act).colwise() + bp.fb2;
  }
  st.tokens += static_cast<int>(n_new);
  Mat<S> out;
  detail::layernorm_forward(x, p.ln_f_g, p.ln_f_b, out, mu, rstd);
  return out;
}

// --- single-column token embeddings (evaluation path) ---

template <typename S>
Vec<S> encode_observation(const Params<S>& p, const grid::Observation& o) {
  Mat<S> obs(kViewFlat, 1);
  obs_to_column<S>(o, obs.col(0));
  Mat<S> planes, cols;
  detail::obs_as_planes(obs, planes);
  detail::im2col(planes, 3, 7, 7, 1, cols);
  const Mat<S> a1 = ((p.conv_w0 * cols).colwise() + p.conv_b0).cwiseMax(S(0));
  detail::im2col(a1, p.cfg.conv_channels[0], 6, 6, 1, cols);
  const Mat<S> a2 = ((p.conv_w1 * cols).colwise() + p.conv_b1).cwiseMax(S(0));
  detail::im2col(a2, p.cfg.conv_channels[1], 5, 5, 1, cols);
  const Mat<S> a3 = ((p.conv_w2 * cols).colwise() + p.conv_b2).cwiseMax(S(0));
  Vec<S> flat(16 * p.cfg.conv_channels[2]);
  for (int c = 0; c < p.cfg.conv_channels[2]; ++c) {
    for (int i = 0; i < 16; ++i) flat[c * 16 + i] = a3(c, i);
  }
  return p.obs_in_w * flat + p.obs_in_b;
}

template <typename S>
Vec<S> project_language(const Params<S>& p, const Vec<S>& base) {
  return p.lang_proj_w * base + p.lang_proj_b;
}

}  // namespace fdt::model

#endif  // FDT_MODEL_NETWORK_HPP_
