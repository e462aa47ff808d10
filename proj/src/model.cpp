#include "rosetta/model.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace rosetta::model {

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
  if (d_model < 1) throw ConfigError("d_model must be positive");
  if (n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (n_layers < 1) throw ConfigError("n_layers must be at least 1");
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be at least 1");
  if (max_steps < 2) throw ConfigError("max_steps must be at least 2");
  if (text_vocab < 2) throw ConfigError("text_vocab must be at least 2");
  if (speech_head_vocab < 2)
    throw ConfigError("speech_head_vocab must be at least 2");
  if (speech_prompt_vocab < 2)
    throw ConfigError("speech_prompt_vocab must be at least 2");
  if (group_size < 1) throw ConfigError("group_size must be at least 1");
  if (encoder.n_layers < 1)
    throw ConfigError("encoder n_layers must be at least 1");
  if (encoder.downsample_ratio < 1)
    throw ConfigError("encoder downsample_ratio must be at least 1");
  if (max_prompt_frames < encoder.downsample_ratio)
    throw ConfigError("max_prompt_frames must cover one pooling window");
  if (!(ln_eps > 0)) throw ConfigError("ln_eps must be positive");
}

int ModelConfig::enc_positions() const {
  return (max_prompt_frames + encoder.downsample_ratio - 1) /
         encoder.downsample_ratio;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

template <class S>
void block_entries(std::vector<ParamRef<S>>& out, BlockParams<S>& b,
                   const std::string& prefix, bool enc) {
  auto add = [&](const char* n, Mat<S>& m, ParamKind k) {
    out.push_back({prefix + n, &m, k, enc});
  };
  add("ln1.gain", b.ln1_g, ParamKind::gain);
  add("ln1.bias", b.ln1_b, ParamKind::bias);
  add("attn.wq", b.wq, ParamKind::weight);
  add("attn.bq", b.bq, ParamKind::bias);
  add("attn.wk", b.wk, ParamKind::weight);
  add("attn.bk", b.bk, ParamKind::bias);
  add("attn.wv", b.wv, ParamKind::weight);
  add("attn.bv", b.bv, ParamKind::bias);
  add("attn.wo", b.wo, ParamKind::weight);
  add("attn.bo", b.bo, ParamKind::bias);
  add("ln2.gain", b.ln2_g, ParamKind::gain);
  add("ln2.bias", b.ln2_b, ParamKind::bias);
  add("mlp.w1", b.w1, ParamKind::weight);
  add("mlp.b1", b.b1, ParamKind::bias);
  add("mlp.w2", b.w2, ParamKind::weight);
  add("mlp.b2", b.b2, ParamKind::bias);
}

template <class S>
void alloc_block(BlockParams<S>& b, int d, int f) {
  b.ln1_g = Mat<S>::Zero(1, d);
  b.ln1_b = Mat<S>::Zero(1, d);
  b.wq = Mat<S>::Zero(d, d);
  b.bq = Mat<S>::Zero(1, d);
  b.wk = Mat<S>::Zero(d, d);
  b.bk = Mat<S>::Zero(1, d);
  b.wv = Mat<S>::Zero(d, d);
  b.bv = Mat<S>::Zero(1, d);
  b.wo = Mat<S>::Zero(d, d);
  b.bo = Mat<S>::Zero(1, d);
  b.ln2_g = Mat<S>::Zero(1, d);
  b.ln2_b = Mat<S>::Zero(1, d);
  b.w1 = Mat<S>::Zero(d, f);
  b.b1 = Mat<S>::Zero(1, f);
  b.w2 = Mat<S>::Zero(f, d);
  b.b2 = Mat<S>::Zero(1, d);
}

}  // namespace

template <class S>
Parameters<S> Parameters<S>::allocate(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  const int f = cfg.d_model * cfg.ffn_mult;
  Parameters<S> p;
  p.tok_text = Mat<S>::Zero(cfg.text_vocab, d);
  p.tok_speech.resize(cfg.group_size);
  for (auto& m : p.tok_speech) m = Mat<S>::Zero(cfg.speech_head_vocab, d);
  p.pos = Mat<S>::Zero(cfg.max_steps, d);
  p.blocks.resize(cfg.n_layers);
  for (auto& b : p.blocks) alloc_block(b, d, f);
  p.ln_f_g = Mat<S>::Zero(1, d);
  p.ln_f_b = Mat<S>::Zero(1, d);
  p.enc_tok = Mat<S>::Zero(cfg.speech_prompt_vocab, d);
  p.enc_pos = Mat<S>::Zero(cfg.enc_positions(), d);
  p.enc_blocks.resize(cfg.encoder.n_layers);
  for (auto& b : p.enc_blocks) alloc_block(b, d, f);
  p.enc_ln_f_g = Mat<S>::Zero(1, d);
  p.enc_ln_f_b = Mat<S>::Zero(1, d);
  p.head_text_w = Mat<S>::Zero(d, cfg.text_vocab);
  p.head_text_b = Mat<S>::Zero(1, cfg.text_vocab);
  p.head_speech_w.resize(cfg.group_size);
  p.head_speech_b.resize(cfg.group_size);
  for (auto& m : p.head_speech_w) m = Mat<S>::Zero(d, cfg.speech_head_vocab);
  for (auto& m : p.head_speech_b) m = Mat<S>::Zero(1, cfg.speech_head_vocab);
  return p;
}

template <class S>
std::vector<ParamRef<S>> Parameters<S>::entries() {
  std::vector<ParamRef<S>> out;
  out.push_back({"tok_text.weight", &tok_text, ParamKind::weight, false});
  for (size_t g = 0; g < tok_speech.size(); ++g)
    out.push_back({"tok_speech." + std::to_string(g) + ".weight",
                   &tok_speech[g], ParamKind::weight, false});
  out.push_back({"pos.weight", &pos, ParamKind::weight, false});
  for (size_t i = 0; i < blocks.size(); ++i)
    block_entries(out, blocks[i], "blocks." + std::to_string(i) + ".", false);
  out.push_back({"ln_f.gain", &ln_f_g, ParamKind::gain, false});
  out.push_back({"ln_f.bias", &ln_f_b, ParamKind::bias, false});
  out.push_back({"enc.tok.weight", &enc_tok, ParamKind::weight, true});
  out.push_back({"enc.pos.weight", &enc_pos, ParamKind::weight, true});
  for (size_t i = 0; i < enc_blocks.size(); ++i)
    block_entries(out, enc_blocks[i], "enc.blocks." + std::to_string(i) + ".",
                  true);
  out.push_back({"enc.ln_f.gain", &enc_ln_f_g, ParamKind::gain, true});
  out.push_back({"enc.ln_f.bias", &enc_ln_f_b, ParamKind::bias, true});
  out.push_back({"head_text.weight", &head_text_w, ParamKind::weight, false});
  out.push_back({"head_text.bias", &head_text_b, ParamKind::bias, false});
  for (size_t g = 0; g < head_speech_w.size(); ++g) {
    out.push_back({"head_speech." + std::to_string(g) + ".weight",
                   &head_speech_w[g], ParamKind::weight, false});
    out.push_back({"head_speech." + std::to_string(g) + ".bias",
                   &head_speech_b[g], ParamKind::bias, false});
  }
  return out;
}

template <class S>
std::vector<ConstParamRef<S>> Parameters<S>::entries() const {
  auto mut = const_cast<Parameters<S>*>(this)->entries();
  std::vector<ConstParamRef<S>> out;
  out.reserve(mut.size());
  for (const auto& e : mut) out.push_back({e.name, e.mat, e.kind, e.encoder});
  return out;
}

template <class S>
void Parameters<S>::init(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  const S std_dev = S(1) / std::sqrt(static_cast<S>(cfg.d_model));
  for (auto& e : entries()) {
    Mat<S>& m = *e.mat;
    switch (e.kind) {
      case ParamKind::weight:
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = static_cast<S>(rng.normal()) * std_dev;
        break;
      case ParamKind::bias:
        m.setZero();
        break;
      case ParamKind::gain:
        m.setOnes();
        break;
    }
  }
}

template <class S>
void Parameters<S>::set_zero() {
  for (auto& e : entries()) e.mat->setZero();
}

template <class S>
size_t Parameters<S>::param_count() const {
  size_t n = 0;
  for (const auto& e : entries()) n += static_cast<size_t>(e.mat->size());
  return n;
}

// ---------------------------------------------------------------------------
// Batch validation

void SequenceBatch::validate(const ModelConfig& cfg) const {
  if (batch < 1) throw InputError("batch must hold at least one sequence");
  if (steps < 1) throw InputError("batch must have at least one step");
  if (steps > cfg.max_steps)
    throw InputError("sequence of " + std::to_string(steps) +
                     " steps exceeds max_steps " +
                     std::to_string(cfg.max_steps));
  if (group != cfg.group_size)
    throw InputError("batch group width does not match the model");
  if (text_in.n0 != batch || text_in.n1 != steps)
    throw InputError("text_in shape mismatch");
  if (speech_in.n0 != batch || speech_in.n1 != steps ||
      speech_in.n2 != group)
    throw InputError("speech_in shape mismatch");
  if (enc_slot.n0 != batch || enc_slot.n1 != steps)
    throw InputError("enc_slot shape mismatch");
  if (static_cast<int>(prompt_speech.size()) != batch)
    throw InputError("prompt_speech size mismatch");
  if (static_cast<int>(seq_len.size()) != batch)
    throw InputError("seq_len size mismatch");
  const int ratio = cfg.encoder.downsample_ratio;
  for (int b = 0; b < batch; ++b) {
    if (seq_len[b] < 1 || seq_len[b] > steps)
      throw InputError("seq_len out of range");
    const auto& pr = prompt_speech[b];
    if (static_cast<int>(pr.size()) > cfg.max_prompt_frames)
      throw InputError("speech prompt of " + std::to_string(pr.size()) +
                       " frames exceeds max_prompt_frames " +
                       std::to_string(cfg.max_prompt_frames));
    for (int32_t tok : pr)
      if (tok < 0 || tok >= cfg.speech_prompt_vocab)
        throw InputError("speech prompt token out of range");
    const int pooled_len =
        pr.empty() ? 0 : (static_cast<int>(pr.size()) + ratio - 1) / ratio;
    for (int t = 0; t < steps; ++t) {
      int32_t tx = text_in(b, t);
      if (tx < 0 || tx >= cfg.text_vocab)
        throw InputError("text token out of range");
      for (int g = 0; g < group; ++g) {
        int32_t sp = speech_in(b, t, g);
        if (sp < 0 || sp >= cfg.speech_head_vocab)
          throw InputError("speech slot token out of range");
      }
      int32_t slot = enc_slot(b, t);
      if (slot < -1 || slot >= pooled_len)
        throw InputError("enc_slot outside the encoded prompt");
    }
  }
}

// ---------------------------------------------------------------------------
// Transformer core (per sequence)

namespace {

using detail::BlockCache;
using detail::LnCache;
using detail::SeqCache;

template <class S>
void layer_norm_fwd(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias,
                    S eps, Mat<S>& out, LnCache<S>& cache) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  cache.xhat.resize(rows, cols);
  cache.inv_std.assign(static_cast<size_t>(rows), S(0));
  out.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    S mean = x.row(r).mean();
    S var = (x.row(r).array() - mean).square().mean();
    S inv = S(1) / std::sqrt(var + eps);
    cache.inv_std[static_cast<size_t>(r)] = inv;
    cache.xhat.row(r) = ((x.row(r).array() - mean) * inv).matrix();
    out.row(r) = cache.xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  }
}

template <class S>
void layer_norm_bwd(const Mat<S>& dy, const Mat<S>& gain,
                    const LnCache<S>& cache, Mat<S>& dgain, Mat<S>& dbias,
                    Mat<S>& dx) {
  const Eigen::Index rows = dy.rows(), cols = dy.cols();
  dx.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dgain.row(0) += dy.row(r).cwiseProduct(cache.xhat.row(r));
    dbias.row(0) += dy.row(r);
    Eigen::Matrix<S, 1, Eigen::Dynamic> g =
        dy.row(r).cwiseProduct(gain.row(0));
    S m1 = g.mean();
    S m2 = g.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = ((g.array() - m1 - cache.xhat.row(r).array() * m2) *
                 cache.inv_std[static_cast<size_t>(r)])
                    .matrix();
  }
}

template <class S>
S gelu_value(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <class S>
S gelu_slope(S x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2))) +
         x * static_cast<S>(inv_sqrt_2pi) * std::exp(S(-0.5) * x * x);
}

template <class S>
void block_fwd(const BlockParams<S>& p, int n_heads, bool causal, S eps,
               const Mat<S>& x_in, BlockCache<S>& c) {
  const Eigen::Index T = x_in.rows();
  const Eigen::Index d = x_in.cols();
  const Eigen::Index dk = d / n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));

  c.x_in = x_in;
  layer_norm_fwd(x_in, p.ln1_g, p.ln1_b, eps, c.ln1_out, c.ln1);

  c.q = c.ln1_out * p.wq;
  c.q.rowwise() += p.bq.row(0);
  c.k = c.ln1_out * p.wk;
  c.k.rowwise() += p.bk.row(0);
  c.v = c.ln1_out * p.wv;
  c.v.rowwise() += p.bv.row(0);

  c.probs.assign(static_cast<size_t>(n_heads), Mat<S>());
  c.heads_out.resize(T, d);
  for (int h = 0; h < n_heads; ++h) {
    auto qh = c.q.block(0, h * dk, T, dk);
    auto kh = c.k.block(0, h * dk, T, dk);
    auto vh = c.v.block(0, h * dk, T, dk);
    Mat<S> scores = qh * kh.transpose() * scale;
    if (causal) {
      const S ninf = -std::numeric_limits<S>::infinity();
      for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = i + 1; j < T; ++j) scores(i, j) = ninf;
    }
    Mat<S>& prob = c.probs[static_cast<size_t>(h)];
    prob.resize(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      S mx = scores.row(i).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e =
          (scores.row(i).array() - mx).exp();
      prob.row(i) = (e / e.sum()).matrix();
    }
    c.heads_out.block(0, h * dk, T, dk) = prob * vh;
  }

  Mat<S> attn = c.heads_out * p.wo;
  attn.rowwise() += p.bo.row(0);
  c.x_mid = x_in + attn;

  layer_norm_fwd(c.x_mid, p.ln2_g, p.ln2_b, eps, c.ln2_out, c.ln2);
  c.h1 = c.ln2_out * p.w1;
  c.h1.rowwise() += p.b1.row(0);
  c.a1 = c.h1.unaryExpr([](S x) { return gelu_value(x); });
}

template <class S>
Mat<S> block_out(const BlockCache<S>& c, const BlockParams<S>& p) {
  Mat<S> mlp = c.a1 * p.w2;
  mlp.rowwise() += p.b2.row(0);
  return c.x_mid + mlp;
}

template <class S>
Mat<S> block_bwd(const BlockParams<S>& p, BlockParams<S>& g, int n_heads,
                 const BlockCache<S>& c, const Mat<S>& dx_out) {
  const Eigen::Index T = c.x_in.rows();
  const Eigen::Index d = c.x_in.cols();
  const Eigen::Index dk = d / n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));

  // MLP branch
  g.w2 += c.a1.transpose() * dx_out;
  g.b2 += dx_out.colwise().sum();
  Mat<S> da1 = dx_out * p.w2.transpose();
  Mat<S> dh1 =
      da1.cwiseProduct(c.h1.unaryExpr([](S x) { return gelu_slope(x); }));
  g.w1 += c.ln2_out.transpose() * dh1;
  g.b1 += dh1.colwise().sum();
  Mat<S> dln2_out = dh1 * p.w1.transpose();
  Mat<S> dx_mid_ln;
  layer_norm_bwd(dln2_out, p.ln2_g, c.ln2, g.ln2_g, g.ln2_b, dx_mid_ln);
  Mat<S> g_mid = dx_out + dx_mid_ln;

  // Attention branch
  g.wo += c.heads_out.transpose() * g_mid;
  g.bo += g_mid.colwise().sum();
  Mat<S> dheads = g_mid * p.wo.transpose();
  Mat<S> dq(T, d), dkm(T, d), dv(T, d);
  for (int h = 0; h < n_heads; ++h) {
    auto qh = c.q.block(0, h * dk, T, dk);
    auto kh = c.k.block(0, h * dk, T, dk);
    auto vh = c.v.block(0, h * dk, T, dk);
    auto doh = dheads.block(0, h * dk, T, dk);
    const Mat<S>& prob = c.probs[static_cast<size_t>(h)];
    Mat<S> dprob = doh * vh.transpose();
    dv.block(0, h * dk, T, dk) = prob.transpose() * doh;
    Mat<S> dscore(T, T);
    for (Eigen::Index i = 0; i < T; ++i) {
      S dot = dprob.row(i).cwiseProduct(prob.row(i)).sum();
      dscore.row(i) = prob.row(i).cwiseProduct(
          (dprob.row(i).array() - dot).matrix());
    }
    dq.block(0, h * dk, T, dk) = dscore * kh * scale;
    dkm.block(0, h * dk, T, dk) = dscore.transpose() * qh * scale;
  }
  g.wq += c.ln1_out.transpose() * dq;
  g.bq += dq.colwise().sum();
  g.wk += c.ln1_out.transpose() * dkm;
  g.bk += dkm.colwise().sum();
  g.wv += c.ln1_out.transpose() * dv;
  g.bv += dv.colwise().sum();
  Mat<S> dln1_out =
      dq * p.wq.transpose() + dkm * p.wk.transpose() + dv * p.wv.transpose();
  Mat<S> dx_ln1;
  layer_norm_bwd(dln1_out, p.ln1_g, c.ln1, g.ln1_g, g.ln1_b, dx_ln1);
  return g_mid + dx_ln1;
}

template <class S>
void stack_fwd(const std::vector<BlockParams<S>>& blocks, const Mat<S>& lnf_g,
               const Mat<S>& lnf_b, S eps, int n_heads, bool causal,
               const Mat<S>& x0, SeqCache<S>& c) {
  c.x0 = x0;
  c.blocks.assign(blocks.size(), BlockCache<S>());
  Mat<S> x = x0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    block_fwd(blocks[i], n_heads, causal, eps, x, c.blocks[i]);
    x = block_out(c.blocks[i], blocks[i]);
  }
  layer_norm_fwd(x, lnf_g, lnf_b, eps, c.y, c.lnf);
}

template <class S>
Mat<S> stack_bwd(const std::vector<BlockParams<S>>& blocks,
                 const Mat<S>& lnf_g, std::vector<BlockParams<S>>& gblocks,
                 Mat<S>& glnf_g, Mat<S>& glnf_b, int n_heads,
                 const SeqCache<S>& c, const Mat<S>& dy) {
  Mat<S> dx;
  layer_norm_bwd(dy, lnf_g, c.lnf, glnf_g, glnf_b, dx);
  for (size_t i = blocks.size(); i-- > 0;)
    dx = block_bwd(blocks[i], gblocks[i], n_heads, c.blocks[i], dx);
  return dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

template <class S>
Model<S> Model<S>::create(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Model<S> m;
  m.cfg = cfg;
  m.params = Parameters<S>::allocate(cfg);
  m.params.init(cfg, seed);
  return m;
}

template <class S>
std::vector<Mat<S>> Model<S>::encode_prompts(const SequenceBatch& batch,
                                             Workspace<S>* ws) const {
  const int d = cfg.d_model;
  const int ratio = cfg.encoder.downsample_ratio;
  std::vector<Mat<S>> out(static_cast<size_t>(batch.batch));
  if (ws) {
    ws->enc_seqs.assign(static_cast<size_t>(batch.batch), SeqCache<S>());
    ws->pooled.assign(static_cast<size_t>(batch.batch), Mat<S>());
  }
  for (int b = 0; b < batch.batch; ++b) {
    const auto& pr = batch.prompt_speech[static_cast<size_t>(b)];
    if (pr.empty()) {
      out[static_cast<size_t>(b)] = Mat<S>(0, d);
      continue;
    }
    const int L = static_cast<int>(pr.size());
    const int P = (L + ratio - 1) / ratio;
    Mat<S> pooled = Mat<S>::Zero(P, d);
    for (int p = 0; p < P; ++p) {
      int lo = p * ratio;
      int hi = std::min(L, lo + ratio);
      for (int l = lo; l < hi; ++l)
        pooled.row(p) += params.enc_tok.row(pr[static_cast<size_t>(l)]);
      pooled.row(p) /= static_cast<S>(hi - lo);
    }
    Mat<S> h0 = pooled;
    for (int p = 0; p < P; ++p) h0.row(p) += params.enc_pos.row(p);
    SeqCache<S> local;
    SeqCache<S>& cache =
        ws ? ws->enc_seqs[static_cast<size_t>(b)] : local;
    stack_fwd(params.enc_blocks, params.enc_ln_f_g, params.enc_ln_f_b,
              static_cast<S>(cfg.ln_eps), cfg.n_heads, /*causal=*/false, h0,
              cache);
    out[static_cast<size_t>(b)] = cache.y;
    if (ws) ws->pooled[static_cast<size_t>(b)] = std::move(pooled);
  }
  if (ws) ws->enc_out = out;
  return out;
}

template <class S>
Mat<S> Model<S>::compose_inputs(const SequenceBatch& batch,
                                const std::vector<Mat<S>>& enc_out) const {
  const int d = cfg.d_model;
  Mat<S> x0 = Mat<S>::Zero(static_cast<Eigen::Index>(batch.batch) * batch.steps, d);
  for (int b = 0; b < batch.batch; ++b) {
    for (int t = 0; t < batch.steps; ++t) {
      auto row = x0.row(static_cast<Eigen::Index>(b) * batch.steps + t);
      row = params.pos.row(t);
      int32_t tx = batch.text_in(b, t);
      if (tx != batch.text_pad) row += params.tok_text.row(tx);
      for (int g = 0; g < batch.group; ++g) {
        int32_t sp = batch.speech_in(b, t, g);
        if (sp != batch.speech_pad)
          row += params.tok_speech[static_cast<size_t>(g)].row(sp);
      }
      int32_t slot = batch.enc_slot(b, t);
      if (slot >= 0) row += enc_out[static_cast<size_t>(b)].row(slot);
    }
  }
  return x0;
}

template <class S>
StepLogits<S> Model<S>::forward(const SequenceBatch& batch,
                                Workspace<S>* ws) const {
  batch.validate(cfg);
  const int B = batch.batch, T = batch.steps, d = cfg.d_model;

  Workspace<S> local;
  Workspace<S>& w = ws ? *ws : local;
  auto enc_out = encode_prompts(batch, &w);
  Mat<S> x0 = compose_inputs(batch, enc_out);

  w.seqs.assign(static_cast<size_t>(B), SeqCache<S>());
  Mat<S> y(static_cast<Eigen::Index>(B) * T, d);
  for (int b = 0; b < B; ++b) {
    stack_fwd(params.blocks, params.ln_f_g, params.ln_f_b,
              static_cast<S>(cfg.ln_eps), cfg.n_heads, /*causal=*/true,
              Mat<S>(x0.middleRows(static_cast<Eigen::Index>(b) * T, T)),
              w.seqs[static_cast<size_t>(b)]);
    y.middleRows(static_cast<Eigen::Index>(b) * T, T) =
        w.seqs[static_cast<size_t>(b)].y;
  }

  StepLogits<S> logits;
  logits.text = y * params.head_text_w;
  logits.text.rowwise() += params.head_text_b.row(0);
  logits.speech.resize(static_cast<size_t>(cfg.group_size));
  for (int g = 0; g < cfg.group_size; ++g) {
    logits.speech[static_cast<size_t>(g)] =
        y * params.head_speech_w[static_cast<size_t>(g)];
    logits.speech[static_cast<size_t>(g)].rowwise() +=
        params.head_speech_b[static_cast<size_t>(g)].row(0);
  }
  return logits;
}

template <class S>
void Model<S>::backward(const SequenceBatch& batch, const Workspace<S>& ws,
                        const StepLogits<S>& dlogits,
                        Parameters<S>& grads) const {
  const int B = batch.batch, T = batch.steps, d = cfg.d_model;
  const int ratio = cfg.encoder.downsample_ratio;

  // Reassemble the final-norm outputs the heads consumed.
  Mat<S> y(static_cast<Eigen::Index>(B) * T, d);
  for (int b = 0; b < B; ++b)
    y.middleRows(static_cast<Eigen::Index>(b) * T, T) =
        ws.seqs[static_cast<size_t>(b)].y;

  // Heads.
  grads.head_text_w += y.transpose() * dlogits.text;
  grads.head_text_b += dlogits.text.colwise().sum();
  Mat<S> dy = dlogits.text * params.head_text_w.transpose();
  for (int g = 0; g < cfg.group_size; ++g) {
    const Mat<S>& dl = dlogits.speech[static_cast<size_t>(g)];
    grads.head_speech_w[static_cast<size_t>(g)] += y.transpose() * dl;
    grads.head_speech_b[static_cast<size_t>(g)] += dl.colwise().sum();
    dy += dl * params.head_speech_w[static_cast<size_t>(g)].transpose();
  }

  // Decoder stacks, then scatter into embeddings / encoder outputs.
  std::vector<Mat<S>> denc_out(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const Mat<S>& eo = ws.enc_out[static_cast<size_t>(b)];
    denc_out[static_cast<size_t>(b)] = Mat<S>::Zero(eo.rows(), eo.cols());
  }
  for (int b = 0; b < B; ++b) {
    Mat<S> dx0 = stack_bwd(
        params.blocks, params.ln_f_g, grads.blocks, grads.ln_f_g,
        grads.ln_f_b, cfg.n_heads, ws.seqs[static_cast<size_t>(b)],
        Mat<S>(dy.middleRows(static_cast<Eigen::Index>(b) * T, T)));
    for (int t = 0; t < T; ++t) {
      grads.pos.row(t) += dx0.row(t);
      int32_t tx = batch.text_in(b, t);
      if (tx != batch.text_pad) grads.tok_text.row(tx) += dx0.row(t);
      for (int g = 0; g < batch.group; ++g) {
        int32_t sp = batch.speech_in(b, t, g);
        if (sp != batch.speech_pad)
          grads.tok_speech[static_cast<size_t>(g)].row(sp) += dx0.row(t);
      }
      int32_t slot = batch.enc_slot(b, t);
      if (slot >= 0)
        denc_out[static_cast<size_t>(b)].row(slot) += dx0.row(t);
    }
  }

  if (cfg.encoder.freeze) return;

  // Encoder stacks.
  for (int b = 0; b < B; ++b) {
    const auto& pr = batch.prompt_speech[static_cast<size_t>(b)];
    if (pr.empty()) continue;
    Mat<S> dh0 = stack_bwd(params.enc_blocks, params.enc_ln_f_g,
                           grads.enc_blocks, grads.enc_ln_f_g,
                           grads.enc_ln_f_b, cfg.n_heads,
                           ws.enc_seqs[static_cast<size_t>(b)],
                           denc_out[static_cast<size_t>(b)]);
    const int L = static_cast<int>(pr.size());
    const int P = static_cast<int>(dh0.rows());
    for (int p = 0; p < P; ++p) {
      grads.enc_pos.row(p) += dh0.row(p);
      int lo = p * ratio;
      int hi = std::min(L, lo + ratio);
      S inv_w = S(1) / static_cast<S>(hi - lo);
      for (int l = lo; l < hi; ++l)
        grads.enc_tok.row(pr[static_cast<size_t>(l)]) += dh0.row(p) * inv_w;
    }
  }
}

template struct Parameters<float>;
template struct Parameters<double>;
template struct Model<float>;
template struct Model<double>;

}  // namespace rosetta::model
