#ifndef FDT_MODEL_PARAMS_HPP_
#define FDT_MODEL_PARAMS_HPP_

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "fdt/model/config.hpp"
#include "fdt/util/rng.hpp"

namespace fdt::model {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr int kViewFlat = 7 * 7 * 3;
inline constexpr int kLangWidth = 128;  // provider output after projection
inline constexpr double kInitStd = 0.02;

// Language tokens enter as 128-dimensional projected sentence embeddings.
// conv output spatial trace for 2x2 stride-1 kernels: 7 -> 6 -> 5 -> 4.
inline constexpr int kConvOut0 = 6, kConvOut1 = 5, kConvOut2 = 4;

template <typename S>
struct BlockParams {
  Vec<S> ln1_g, ln1_b, ln2_g, ln2_b;
  Mat<S> wq, wk, wv, wo;
  Vec<S> bq, bk, bv, bo;
  Mat<S> fc1, fc2;
  Vec<S> fb1, fb2;
};

// All trainable state plus the inference-only feedback placeholder buffer.
template <typename S>
struct Params {
  ModelConfig cfg;
  VariantSpec variant;

  Mat<S> conv_w0, conv_w1, conv_w2;  // (out_ch x in_ch*4) patch weights
  Vec<S> conv_b0, conv_b1, conv_b2;
  Mat<S> obs_in_w;  // hidden x (4*4*conv_channels[2])
  Vec<S> obs_in_b;
  Mat<S> lang_proj_w;  // kLangWidth x lang_src_dim, shared mission/feedback
  Vec<S> lang_proj_b;
  Mat<S> rtg_in_w;  // hidden x 1
  Vec<S> rtg_in_b;
  Mat<S> mission_in_w;  // hidden x kLangWidth
  Vec<S> mission_in_b;
  Mat<S> feedback_in_w;  // hidden x kLangWidth
  Vec<S> feedback_in_b;
  Mat<S> action_in_w;  // hidden x action_count
  Vec<S> action_in_b;
  Mat<S> pos_emb;  // hidden x max_timestep
  Vec<S> embed_ln_g, embed_ln_b;
  std::vector<BlockParams<S>> blocks;
  Vec<S> ln_f_g, ln_f_b;
  Mat<S> head_w;  // action_count x hidden
  Vec<S> head_b;
  // Substituted for live feedback embeddings when feedback is withheld at
  // inference; sampled once at init, stored with the checkpoint, untrained.
  Vec<S> feedback_placeholder;

  static Params make(const ModelConfig& cfg, const VariantSpec& variant) {
    cfg.validate();
    variant.validate();
    Params p;
    p.cfg = cfg;
    p.variant = variant;
    const int h = cfg.hidden;
    const auto& ch = cfg.conv_channels;
    p.conv_w0.setZero(ch[0], 3 * 4);
    p.conv_b0.setZero(ch[0]);
    p.conv_w1.setZero(ch[1], ch[0] * 4);
    p.conv_b1.setZero(ch[1]);
    p.conv_w2.setZero(ch[2], ch[1] * 4);
    p.conv_b2.setZero(ch[2]);
    p.obs_in_w.setZero(h, kConvOut2 * kConvOut2 * ch[2]);
    p.obs_in_b.setZero(h);
    if (variant.uses_language()) {
      p.lang_proj_w.setZero(kLangWidth, cfg.lang_src_dim);
      p.lang_proj_b.setZero(kLangWidth);
    }
    if (variant.use_rtg) {
      p.rtg_in_w.setZero(h, 1);
      p.rtg_in_b.setZero(h);
    }
    if (variant.use_mission) {
      p.mission_in_w.setZero(h, kLangWidth);
      p.mission_in_b.setZero(h);
    }
    if (variant.use_feedback) {
      p.feedback_in_w.setZero(h, kLangWidth);
      p.feedback_in_b.setZero(h);
      p.feedback_placeholder.setZero(kLangWidth);
    }
    p.action_in_w.setZero(h, cfg.action_count);
    p.action_in_b.setZero(h);
    p.pos_emb.setZero(h, cfg.max_timestep);
    p.embed_ln_g.setZero(h);
    p.embed_ln_b.setZero(h);
    p.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& b : p.blocks) {
      b.ln1_g.setZero(h);
      b.ln1_b.setZero(h);
      b.ln2_g.setZero(h);
      b.ln2_b.setZero(h);
      b.wq.setZero(h, h);
      b.wk.setZero(h, h);
      b.wv.setZero(h, h);
      b.wo.setZero(h, h);
      b.bq.setZero(h);
      b.bk.setZero(h);
      b.bv.setZero(h);
      b.bo.setZero(h);
      b.fc1.setZero(4 * h, h);
      b.fb1.setZero(4 * h);
      b.fc2.setZero(h, 4 * h);
      b.fb2.setZero(h);
    }
    p.ln_f_g.setZero(h);
    p.ln_f_b.setZero(h);
    p.head_w.setZero(cfg.action_count, h);
    p.head_b.setZero(cfg.action_count);
    return p;
  }

  // Visits every trainable tensor in a fixed order. The callback receives
  // (name, matrix-or-vector reference, is_weight) where is_weight marks
  // tensors subject to weight decay (2D weights and the positional table;
  // biases and normalization parameters are excluded).
  template <class F>
  void visit(F&& f) {
    f("conv.w0", conv_w0, true);
    f("conv.b0", conv_b0, false);
    f("conv.w1", conv_w1, true);
    f("conv.b1", conv_b1, false);
    f("conv.w2", conv_w2, true);
    f("conv.b2", conv_b2, false);
    f("obs_in.w", obs_in_w, true);
    f("obs_in.b", obs_in_b, false);
    if (variant.uses_language()) {
      f("lang_proj.w", lang_proj_w, true);
      f("lang_proj.b", lang_proj_b, false);
    }
    if (variant.use_rtg) {
      f("rtg_in.w", rtg_in_w, true);
      f("rtg_in.b", rtg_in_b, false);
    }
    if (variant.use_mission) {
      f("mission_in.w", mission_in_w, true);
      f("mission_in.b", mission_in_b, false);
    }
    if (variant.use_feedback) {
      f("feedback_in.w", feedback_in_w, true);
      f("feedback_in.b", feedback_in_b, false);
    }
    f("action_in.w", action_in_w, true);
    f("action_in.b", action_in_b, false);
    f("pos_emb", pos_emb, true);
    f("embed_ln.g", embed_ln_g, false);
    f("embed_ln.b", embed_ln_b, false);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string prefix = "blocks." + std::to_string(i) + ".";
      auto& b = blocks[i];
      f(prefix + "ln1.g", b.ln1_g, false);
      f(prefix + "ln1.b", b.ln1_b, false);
      f(prefix + "attn.wq", b.wq, true);
      f(prefix + "attn.bq", b.bq, false);
      f(prefix + "attn.wk", b.wk, true);
      f(prefix + "attn.bk", b.bk, false);
      f(prefix + "attn.wv", b.wv, true);
      f(prefix + "attn.bv", b.bv, false);
      f(prefix + "attn.wo", b.wo, true);
      f(prefix + "attn.bo", b.bo, false);
      f(prefix + "ln2.g", b.ln2_g, false);
      f(prefix + "ln2.b", b.ln2_b, false);
      f(prefix + "mlp.fc1", b.fc1, true);
      f(prefix + "mlp.fb1", b.fb1, false);
      f(prefix + "mlp.fc2", b.fc2, true);
      f(prefix + "mlp.fb2", b.fb2, false);
    }
    f("ln_f.g", ln_f_g, false);
    f("ln_f.b", ln_f_b, false);
    f("head.w", head_w, true);
    f("head.b", head_b, false);
  }

  template <class F>
  void visit(F&& f) const {
    const_cast<Params*>(this)->visit(
        [&f](const std::string& name, auto& tensor, bool is_weight) {
          f(name, const_cast<const std::remove_reference_t<decltype(tensor)>&>(tensor),
            is_weight);
        });
  }

  void init(std::uint64_t seed) {
    util::Rng rng = util::child_rng(seed, "param-init");
    visit([&rng](const std::string& name, auto& tensor, bool is_weight) {
      if (is_weight) {
        for (Eigen::Index i = 0; i < tensor.size(); ++i) {
          tensor.data()[i] = static_cast<S>(rng.normal() * kInitStd);
        }
      } else if (name.ends_with(".g")) {
        tensor.setOnes();  // normalization gains
      } else {
        tensor.setZero();  // biases and normalization shifts
      }
    });
    if (variant.use_feedback) {
      util::Rng prng = util::child_rng(seed, "feedback-placeholder");
      for (Eigen::Index i = 0; i < feedback_placeholder.size(); ++i) {
        feedback_placeholder[i] = static_cast<S>(prng.normal());
      }
    }
  }

  long parameter_count() const {
    long n = 0;
    visit([&n](const std::string&, const auto& tensor, bool) {
      n += static_cast<long>(tensor.size());
    });
    return n;
  }

  Params zeros_like() const {
    Params z = make(cfg, variant);
    return z;
  }
};

}  // namespace fdt::model

#endif  // FDT_MODEL_PARAMS_HPP_
