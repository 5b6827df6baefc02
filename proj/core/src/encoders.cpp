#include "dtp/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace dtp {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

Tensor trunc_normal_tensor(std::vector<int64_t> shape, Rng& rng, double sigma = 0.02) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.trunc_normal(sigma);
  return t;
}

void add_mlp2_params(ParameterSet& ps, const std::string& prefix, int in, int hidden, int out,
                     Rng& rng) {
  ps.add(prefix + ".w1", trunc_normal_tensor({in, hidden}, rng));
  ps.add(prefix + ".b1", Tensor::zeros({1, hidden}));
  ps.add(prefix + ".w2", trunc_normal_tensor({hidden, out}, rng));
  ps.add(prefix + ".b2", Tensor::zeros({1, out}));
}

Node* pnode(Graph& g, ParameterSet& ps, const std::string& name) {
  const int id = ps.find(name);
  if (id < 0) throw std::logic_error("parameter not registered: " + name);
  return g.param(ps, id);
}

// n identical copies of a [1,d] parameter row
Node* repeat_row(Graph& g, Node* row, int64_t n) {
  return g.gather_rows(row, std::vector<int64_t>(static_cast<size_t>(n), 0));
}

}  // namespace

std::vector<double> fourier_bands(int count) {
  if (count < 1) throw std::invalid_argument("need at least one band");
  std::vector<double> f(static_cast<size_t>(count));
  for (int j = 0; j < count; ++j)
    f[static_cast<size_t>(j)] =
        count == 1 ? 1.0 : std::pow(128.0, static_cast<double>(j) / (count - 1));
  return f;
}

Tensor fourier_features(const Tensor& v, const std::vector<double>& bands) {
  if (v.rank() != 2) throw TensorError("fourier features expect a 2-d input");
  const int64_t m = v.rows(), n = v.cols();
  const int64_t b = static_cast<int64_t>(bands.size());
  Tensor out({m, 2 * b * n + n});
  for (int64_t r = 0; r < m; ++r) {
    for (int64_t i = 0; i < n; ++i) {
      const double x = v.at2(r, i);
      for (int64_t j = 0; j < b; ++j) {
        const double a = kTwoPi * bands[static_cast<size_t>(j)] * x;
        out.at2(r, i * 2 * b + 2 * j) = std::sin(a);
        out.at2(r, i * 2 * b + 2 * j + 1) = std::cos(a);
      }
      out.at2(r, 2 * b * n + i) = x;  // raw value keeps low-frequency information
    }
  }
  return out;
}

Tensor fourier_features_jacobian(const Tensor& v, const std::vector<double>& bands) {
  if (v.rank() != 2 || v.rows() != 1) throw TensorError("jacobian expects a [1,n] input");
  const int64_t n = v.cols();
  const int64_t b = static_cast<int64_t>(bands.size());
  Tensor jac({2 * b * n + n, n});  // zero off the block diagonal
  for (int64_t i = 0; i < n; ++i) {
    const double x = v.at2(0, i);
    for (int64_t j = 0; j < b; ++j) {
      const double w = kTwoPi * bands[static_cast<size_t>(j)];
      jac.at2(i * 2 * b + 2 * j, i) = w * std::cos(w * x);
      jac.at2(i * 2 * b + 2 * j + 1, i) = -w * std::sin(w * x);
    }
    jac.at2(2 * b * n + i, i) = 1.0;
  }
  return jac;
}

void init_encoder_params(ParameterSet& ps, const EncoderDims& d, Rng& rng) {
  if (d.image_size % d.patch != 0)
    throw std::invalid_argument("patch size must divide image size");
  if (d.d_model % 2 != 0 || d.d_model < 6)
    throw std::invalid_argument("token dimension must be even and at least 6");
  if (d.vocab < 1) throw std::invalid_argument("vocabulary must be nonempty");

  const int feat_vec = 2 * d.bands * 256 + 256;
  const int feat_scalar = 2 * d.bands + 1;
  add_mlp2_params(ps, "enc.lowdim", feat_vec, d.d_model, d.d_model, rng);
  add_mlp2_params(ps, "enc.freq", feat_scalar, d.d_model, d.d_model, rng);
  add_mlp2_params(ps, "enc.step", feat_scalar, d.d_model, d.d_model, rng);
  ps.add("enc.lowdim_pos", trunc_normal_tensor({d.lowdim_tokens(), d.d_model}, rng));
  ps.add("enc.lowdim_mod", trunc_normal_tensor({4, d.d_model}, rng));  // z, chunk, c, k

  ps.add("enc.patch_proj.w", trunc_normal_tensor({d.patch * d.patch, d.d_model}, rng));
  ps.add("enc.patch_proj.b", Tensor::zeros({1, d.d_model}));
  add_mlp2_params(ps, "enc.img_adapt", d.d_model, d.d_model, d.d_model, rng);

  ps.add("enc.lang_embed", trunc_normal_tensor({d.vocab, d.lang_embed}, rng));
  add_mlp2_params(ps, "enc.lang_adapt", d.lang_embed, d.d_model, d.d_model, rng);

  for (const char* n : {"enc.null_image", "enc.null_text", "enc.null_proprio",
                        "enc.null_chunk", "enc.null_step"})
    ps.add(n, trunc_normal_tensor({1, d.d_model}, rng));
}

Node* mlp2(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x) {
  Node* h = g.add_rowvec(g.matmul(x, pnode(g, ps, prefix + ".w1")), pnode(g, ps, prefix + ".b1"));
  h = g.gelu(h);
  return g.add_rowvec(g.matmul(h, pnode(g, ps, prefix + ".w2")), pnode(g, ps, prefix + ".b2"));
}

Node* fourier_mlp(Graph& g, ParameterSet& ps, const std::string& prefix, const Tensor& v,
                  const std::vector<double>& bands) {
  return mlp2(g, ps, prefix, g.input(fourier_features(v, bands)));
}

TokenSequence encode_lowdim(Graph& g, ParameterSet& ps, const EncoderDims& d,
                            const Tensor& z_pack, const Tensor& chunk_packs, double c_hz, int k,
                            bool null_chunk_and_k) {
  if (z_pack.rank() != 2 || z_pack.rows() != 1 || z_pack.cols() != 256)
    throw TensorError("state pack must be [1,256]");
  if (chunk_packs.rank() != 2 || chunk_packs.rows() != d.t_a || chunk_packs.cols() != 256)
    throw TensorError("chunk packs must be [t_a,256]");

  const auto bands = fourier_bands(d.bands);
  std::vector<Node*> parts;
  if (null_chunk_and_k) {
    parts.push_back(mlp2(g, ps, "enc.lowdim", g.input(fourier_features(z_pack, bands))));
    parts.push_back(repeat_row(g, pnode(g, ps, "enc.null_chunk"), d.t_a));
  } else {
    // one shared-MLP pass over the stacked state + chunk rows
    Tensor stacked({1 + d.t_a, 256});
    for (int64_t c = 0; c < 256; ++c) stacked.at2(0, c) = z_pack.at2(0, c);
    for (int64_t r = 0; r < d.t_a; ++r)
      for (int64_t c = 0; c < 256; ++c) stacked.at2(1 + r, c) = chunk_packs.at2(r, c);
    parts.push_back(mlp2(g, ps, "enc.lowdim", g.input(fourier_features(stacked, bands))));
  }
  parts.push_back(
      fourier_mlp(g, ps, "enc.freq", Tensor({1, 1}, {c_hz / d.c_max}), bands));
  if (null_chunk_and_k)
    parts.push_back(pnode(g, ps, "enc.null_step"));
  else
    parts.push_back(fourier_mlp(
        g, ps, "enc.step", Tensor({1, 1}, {static_cast<double>(k) / d.k_max}), bands));

  Node* x = g.concat_rows(parts);
  x = g.add(x, pnode(g, ps, "enc.lowdim_pos"));
  std::vector<int64_t> mod_ids(static_cast<size_t>(d.lowdim_tokens()), 1);
  mod_ids.front() = 0;                 // z
  mod_ids[mod_ids.size() - 2] = 2;     // c
  mod_ids[mod_ids.size() - 1] = 3;     // k
  x = g.add(x, g.gather_rows(pnode(g, ps, "enc.lowdim_mod"), mod_ids));

  TokenSequence seq;
  seq.tokens = x;
  seq.tags.assign(static_cast<size_t>(d.lowdim_tokens()),
                  null_chunk_and_k ? TokenTag::null_token : TokenTag::chunk);
  if (!null_chunk_and_k) seq.tags.back() = TokenTag::timestep;
  seq.tags.front() = TokenTag::proprio;
  seq.tags[seq.tags.size() - 2] = TokenTag::frequency;
  seq.mask = Tensor::full({d.lowdim_tokens()}, 1.0);
  return seq;
}

Tensor grid_pos_embed(const EncoderDims& d) {
  const int axes[3] = {d.t_img, d.views, d.patches_per_view()};
  int w[3];
  const int base = (d.d_model / 3) & ~1;
  w[0] = w[1] = w[2] = base;
  int rem = d.d_model - 3 * base;
  for (int i = 0; rem > 0; ++i, rem -= 2) w[i % 3] += 2;

  const int64_t rows = static_cast<int64_t>(axes[0]) * axes[1] * axes[2];
  Tensor out({rows, d.d_model});
  for (int h = 0; h < axes[0]; ++h)
    for (int v = 0; v < axes[1]; ++v)
      for (int p = 0; p < axes[2]; ++p) {
        const int64_t row = (static_cast<int64_t>(h) * axes[1] + v) * axes[2] + p;
        const int coord[3] = {h, v, p};
        int off = 0;
        for (int ax = 0; ax < 3; ++ax) {
          for (int j = 0; j < w[ax] / 2; ++j) {
            const double div = std::pow(10000.0, 2.0 * j / w[ax]);
            out.at2(row, off + 2 * j) = std::sin(coord[ax] / div);
            out.at2(row, off + 2 * j + 1) = std::cos(coord[ax] / div);
          }
          off += w[ax];
        }
      }
  return out;
}

TokenSequence encode_images(Graph& g, ParameterSet& ps, const EncoderDims& d,
                            const std::vector<double>& images) {
  const int g_sz = d.image_size, p_sz = d.patch;
  const size_t frame = static_cast<size_t>(g_sz) * g_sz;
  if (images.size() != static_cast<size_t>(d.image_units()) * frame)
    throw TensorError("image buffer does not match t_img*views frames");

  const int gp = g_sz / p_sz;
  const int64_t n_tok = d.image_tokens();
  Tensor patches({n_tok, static_cast<int64_t>(p_sz) * p_sz});
  int64_t row = 0;
  for (int u = 0; u < d.image_units(); ++u) {
    const double* f = images.data() + static_cast<size_t>(u) * frame;
    for (int pr = 0; pr < gp; ++pr)
      for (int pc = 0; pc < gp; ++pc, ++row)
        for (int y = 0; y < p_sz; ++y)
          for (int x = 0; x < p_sz; ++x)
            patches.at2(row, static_cast<int64_t>(y) * p_sz + x) =
                f[static_cast<size_t>(pr * p_sz + y) * g_sz + (pc * p_sz + x)];
  }

  Node* t = g.add_rowvec(g.matmul(g.input(std::move(patches)), pnode(g, ps, "enc.patch_proj.w")),
                         pnode(g, ps, "enc.patch_proj.b"));
  t = mlp2(g, ps, "enc.img_adapt", t);
  t = g.add(t, g.input(grid_pos_embed(d)));

  TokenSequence seq;
  seq.tokens = t;
  seq.tags.assign(static_cast<size_t>(n_tok), TokenTag::image);
  seq.mask = Tensor::full({n_tok}, 1.0);
  return seq;
}

TokenSequence encode_language(Graph& g, ParameterSet& ps, const EncoderDims& d,
                              const std::vector<int>& ids) {
  TokenSequence seq;
  if (ids.empty()) {
    // no instruction: a single attendable null keeps cross-attention total
    seq.tokens = pnode(g, ps, "enc.null_text");
    seq.tags = {TokenTag::null_token};
    seq.mask = Tensor::full({1}, 1.0);
    return seq;
  }
  std::vector<int64_t> rows;
  rows.reserve(ids.size());
  seq.mask = Tensor({static_cast<int64_t>(ids.size())});
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= d.vocab)
      throw std::out_of_range("token id outside vocabulary: " + std::to_string(ids[i]));
    rows.push_back(ids[i]);
    seq.mask.at(static_cast<int64_t>(i)) = ids[i] == 0 ? 0.0 : 1.0;  // pad id is 0
  }
  Node* e = g.gather_rows(pnode(g, ps, "enc.lang_embed"), rows);
  seq.tokens = mlp2(g, ps, "enc.lang_adapt", e);
  seq.tags.assign(ids.size(), TokenTag::text);
  return seq;
}

MaskDecisions draw_modality_mask(int image_units, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("mask probability must be in [0,1)");
  MaskDecisions m;
  m.image_units.resize(static_cast<size_t>(image_units));
  for (auto& u : m.image_units) u = p > 0.0 && rng.uniform() < p ? 1 : 0;
  m.text = p > 0.0 && rng.uniform() < p;
  m.proprio = p > 0.0 && rng.uniform() < p;
  return m;
}

void apply_modality_mask(Graph& g, ParameterSet& ps, const EncoderDims& d,
                         const MaskDecisions& m, TokenSequence& lowdim, TokenSequence& images,
                         TokenSequence& text) {
  if (static_cast<int>(m.image_units.size()) != d.image_units())
    throw std::invalid_argument("one mask decision per image unit required");

  bool any_image = false;
  for (uint8_t u : m.image_units) any_image = any_image || u;
  if (any_image) {
    const int pn = d.patches_per_view();
    std::vector<Node*> parts;
    for (int u = 0; u < d.image_units(); ++u) {
      if (m.image_units[static_cast<size_t>(u)]) {
        parts.push_back(repeat_row(g, pnode(g, ps, "enc.null_image"), pn));
        for (int i = 0; i < pn; ++i)
          images.tags[static_cast<size_t>(u * pn + i)] = TokenTag::null_token;
      } else {
        parts.push_back(g.slice_rows(images.tokens, static_cast<int64_t>(u) * pn, pn));
      }
    }
    images.tokens = g.concat_rows(parts);
  }

  if (m.text) {
    // pads keep mask 0; their value is irrelevant, so nulling all rows is fine
    text.tokens = repeat_row(g, pnode(g, ps, "enc.null_text"), text.mask.numel());
    text.tags.assign(text.tags.size(), TokenTag::null_token);
  }

  if (m.proprio) {
    const int64_t n = static_cast<int64_t>(lowdim.tags.size());
    lowdim.tokens = g.concat_rows(
        {pnode(g, ps, "enc.null_proprio"), g.slice_rows(lowdim.tokens, 1, n - 1)});
    lowdim.tags.front() = TokenTag::null_token;
  }
}

}  // namespace dtp
