#include "dtp/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dtp {

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kMaskedLogit = -1e9;

Node* pnode(Graph& g, ParameterSet& ps, const std::string& name) {
  const int id = ps.find(name);
  if (id < 0) throw std::logic_error("parameter not registered: " + name);
  return g.param(ps, id);
}

Tensor trunc_normal_tensor(std::vector<int64_t> shape, Rng& rng, double sigma = 0.02) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.trunc_normal(sigma);
  return t;
}

void add_linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng,
                bool zero_weight = false) {
  ps.add(prefix + ".w", zero_weight ? Tensor::zeros({in, out})
                                    : trunc_normal_tensor({in, out}, rng));
  ps.add(prefix + ".b", Tensor::zeros({1, out}));
}

// x[n,d] -> linear via params <prefix>.{w,b}
Node* linear(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x) {
  return g.add_rowvec(g.matmul(x, pnode(g, ps, prefix + ".w")), pnode(g, ps, prefix + ".b"));
}

// pre-norm: RMSNorm by default, centered LayerNorm under the ablation
Node* block_norm(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x, bool ablated) {
  if (ablated)
    return g.layer_norm(x, pnode(g, ps, prefix + ".gain"), pnode(g, ps, prefix + ".bias"),
                        kNormEps);
  return g.rms_norm(x, pnode(g, ps, prefix + ".gain"), kNormEps);
}

void add_norm(ParameterSet& ps, const std::string& prefix, int d, bool ablated) {
  ps.add(prefix + ".gain", Tensor::full({d}, 1.0));
  if (ablated) ps.add(prefix + ".bias", Tensor::zeros({d}));
}

void record_logits(Node* logits, ForwardStats* stats) {
  if (!stats) return;
  for (int64_t i = 0; i < logits->v().numel(); ++i) {
    const double a = std::fabs(logits->v().at(i));
    // ignore additive pad bias; real logits never approach it
    if (a < 1e8 && a > stats->max_attention_logit) stats->max_attention_logit = a;
  }
}

// Shared multi-head attention core. cond_mask may be empty (no padding).
Node* attention(Graph& g, ParameterSet& ps, const std::string& prefix, Node* queries_from,
                Node* keys_from, const Tensor& cond_mask, int heads, bool qknorm,
                ForwardStats* stats) {
  const int64_t d = queries_from->v().cols();
  const int64_t dh = d / heads;
  Node* q = linear(g, ps, prefix + ".q", queries_from);
  Node* k = linear(g, ps, prefix + ".k", keys_from);
  Node* v = linear(g, ps, prefix + ".v", keys_from);

  Node* pad_bias = nullptr;
  if (!cond_mask.empty()) {
    Tensor bias({1, cond_mask.numel()});
    for (int64_t i = 0; i < cond_mask.numel(); ++i)
      bias.at(i) = cond_mask.at(i) != 0.0 ? 0.0 : kMaskedLogit;
    pad_bias = g.input(std::move(bias));
  }

  std::vector<Node*> head_out;
  head_out.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Node* qh = g.slice_cols(q, h * dh, dh);
    Node* kh = g.slice_cols(k, h * dh, dh);
    Node* vh = g.slice_cols(v, h * dh, dh);
    if (qknorm) {
      Node* gq = g.slice_rows(pnode(g, ps, prefix + ".gq"), h, 1);
      Node* gk = g.slice_rows(pnode(g, ps, prefix + ".gk"), h, 1);
      qh = g.rms_norm(qh, gq, kNormEps);
      kh = g.rms_norm(kh, gk, kNormEps);
    }
    Node* logits = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(double(dh)));
    if (pad_bias) logits = g.add_rowvec(logits, pad_bias);
    record_logits(logits, stats);
    head_out.push_back(g.matmul(g.softmax_rows(logits), vh));
  }
  return linear(g, ps, prefix + ".out", g.concat_cols(head_out));
}

}  // namespace

EncoderDims ModelConfig::enc_dims() const {
  EncoderDims d;
  d.d_model = d_model;
  d.t_a = t_a;
  d.vocab = vocab;
  d.lang_embed = lang_embed;
  d.image_size = image_size;
  d.patch = patch;
  d.t_img = t_img;
  d.views = views;
  d.bands = bands;
  d.c_max = c_max;
  d.k_max = k_max;
  return d;
}

void ModelConfig::validate() const {
  if (layers < 2) throw std::invalid_argument("need at least two layers");
  if (d_model % heads != 0) throw std::invalid_argument("head count must divide model dim");
  if (t_a < 1) throw std::invalid_argument("chunk length must be positive");
  if (vocab < 1) throw std::invalid_argument("vocabulary must be set");
  if (image_size % patch != 0) throw std::invalid_argument("patch must divide image size");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["layers"] = layers;
  j["d_model"] = d_model;
  j["heads"] = heads;
  j["t_a"] = t_a;
  j["vocab"] = vocab;
  j["lang_embed"] = lang_embed;
  j["image_size"] = image_size;
  j["patch"] = patch;
  j["t_img"] = t_img;
  j["views"] = views;
  j["bands"] = bands;
  j["c_max"] = c_max;
  j["k_max"] = k_max;
  j["no_qknorm_rmsnorm"] = no_qknorm_rmsnorm;
  j["no_mlp_decoder"] = no_mlp_decoder;
  j["no_aci"] = no_aci;
  j["regress"] = regress;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.t_a = j.at("t_a").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.lang_embed = j.at("lang_embed").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.patch = j.at("patch").get<int>();
  c.t_img = j.at("t_img").get<int>();
  c.views = j.at("views").get<int>();
  c.bands = j.at("bands").get<int>();
  c.c_max = j.at("c_max").get<double>();
  c.k_max = j.at("k_max").get<int>();
  c.no_qknorm_rmsnorm = j.at("no_qknorm_rmsnorm").get<bool>();
  c.no_mlp_decoder = j.at("no_mlp_decoder").get<bool>();
  c.no_aci = j.at("no_aci").get<bool>();
  c.regress = j.at("regress").get<bool>();
  c.validate();
  return c;
}

void init_model_params(ParameterSet& ps, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  init_encoder_params(ps, cfg.enc_dims(), rng);

  const bool abl = cfg.no_qknorm_rmsnorm;
  for (int i = 0; i < cfg.layers; ++i) {
    const std::string b = "blk" + std::to_string(i);
    add_norm(ps, b + ".norm1", cfg.d_model, abl);
    add_linear(ps, b + ".sa.q", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, b + ".sa.k", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, b + ".sa.v", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, b + ".sa.out", cfg.d_model, cfg.d_model, rng, /*zero_weight=*/true);
    add_norm(ps, b + ".norm2", cfg.d_model, abl);
    add_linear(ps, b + ".ca.q", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, b + ".ca.k", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, b + ".ca.v", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, b + ".ca.out", cfg.d_model, cfg.d_model, rng, /*zero_weight=*/true);
    if (!abl) {
      ps.add(b + ".sa.gq", Tensor::full({cfg.heads, 1}, 1.0));
      ps.add(b + ".sa.gk", Tensor::full({cfg.heads, 1}, 1.0));
      ps.add(b + ".ca.gq", Tensor::full({cfg.heads, 1}, 1.0));
      ps.add(b + ".ca.gk", Tensor::full({cfg.heads, 1}, 1.0));
    }
    add_norm(ps, b + ".norm3", cfg.d_model, abl);
    add_linear(ps, b + ".ff.in", cfg.d_model, 4 * cfg.d_model, rng);
    add_linear(ps, b + ".ff.out", 4 * cfg.d_model, cfg.d_model, rng, /*zero_weight=*/true);
  }
  add_norm(ps, "final", cfg.d_model, abl);
  if (cfg.no_mlp_decoder) {
    add_linear(ps, "dec", cfg.d_model, 128, rng, /*zero_weight=*/true);
  } else {
    add_linear(ps, "dec.hidden", cfg.d_model, cfg.d_model, rng);
    add_linear(ps, "dec.out", cfg.d_model, 128, rng, /*zero_weight=*/true);
  }
}

Node* attention_self(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x, int heads,
                     bool qknorm, ForwardStats* stats) {
  return attention(g, ps, prefix, x, x, Tensor(), heads, qknorm, stats);
}

Node* cross_attention_aci(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x,
                          int layer_index, int heads, bool qknorm, const TokenSequence& images,
                          const TokenSequence& text, bool no_aci, ForwardStats* stats) {
  Node* cond = nullptr;
  Tensor mask;
  if (no_aci) {
    cond = g.concat_rows({images.tokens, text.tokens});
    mask = Tensor({images.mask.numel() + text.mask.numel()});
    for (int64_t i = 0; i < images.mask.numel(); ++i) mask.at(i) = images.mask.at(i);
    for (int64_t i = 0; i < text.mask.numel(); ++i)
      mask.at(images.mask.numel() + i) = text.mask.at(i);
  } else if (layer_index % 2 == 0) {
    cond = images.tokens;
    mask = images.mask;
  } else {
    cond = text.tokens;
    mask = text.mask;
  }
  return attention(g, ps, prefix, x, cond, mask, heads, qknorm, stats);
}

Node* dit_block(Graph& g, ParameterSet& ps, const ModelConfig& cfg, int layer_index, Node* x,
                const TokenSequence& images, const TokenSequence& text, ForwardStats* stats) {
  const std::string b = "blk" + std::to_string(layer_index);
  const bool qknorm = !cfg.no_qknorm_rmsnorm;
  Node* h = block_norm(g, ps, b + ".norm1", x, cfg.no_qknorm_rmsnorm);
  x = g.add(x, attention_self(g, ps, b + ".sa", h, cfg.heads, qknorm, stats));
  h = block_norm(g, ps, b + ".norm2", x, cfg.no_qknorm_rmsnorm);
  x = g.add(x, cross_attention_aci(g, ps, b + ".ca", h, layer_index, cfg.heads, qknorm, images,
                                   text, cfg.no_aci, stats));
  h = block_norm(g, ps, b + ".norm3", x, cfg.no_qknorm_rmsnorm);
  Node* ff = linear(g, ps, b + ".ff.out", g.gelu(linear(g, ps, b + ".ff.in", h)));
  return g.add(x, ff);
}

Node* decode_actions(Graph& g, ParameterSet& ps, const ModelConfig& cfg, Node* chunk_tokens) {
  if (cfg.no_mlp_decoder) return linear(g, ps, "dec", chunk_tokens);
  return linear(g, ps, "dec.out", g.gelu(linear(g, ps, "dec.hidden", chunk_tokens)));
}

Node* rdt_forward(Graph& g, ParameterSet& ps, const ModelConfig& cfg, const NetInputs& in,
                  ForwardStats* stats) {
  const EncoderDims dims = cfg.enc_dims();
  TokenSequence lowdim =
      encode_lowdim(g, ps, dims, in.z_pack, in.chunk_packs, in.c_hz, in.k, cfg.regress);
  TokenSequence images = encode_images(g, ps, dims, in.images);
  TokenSequence text = encode_language(g, ps, dims, in.text_ids);
  if (in.mask) apply_modality_mask(g, ps, dims, *in.mask, lowdim, images, text);

  Node* x = lowdim.tokens;
  for (int i = 0; i < cfg.layers; ++i) x = dit_block(g, ps, cfg, i, x, images, text, stats);
  x = block_norm(g, ps, "final", x, cfg.no_qknorm_rmsnorm);
  return decode_actions(g, ps, cfg, g.slice_rows(x, 1, cfg.t_a));
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParameterSet& ps,
                     int64_t step) {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = nlohmann::json::parse(cfg.to_json());
  j["step"] = step;
  nlohmann::json plist = nlohmann::json::array();
  for (int id = 0; id < ps.size(); ++id) {
    nlohmann::json p;
    p["name"] = ps.name(id);
    p["shape"] = ps.value(id).shape();
    plist.push_back(std::move(p));
  }
  j["params"] = std::move(plist);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
  for (int id = 0; id < ps.size(); ++id) {
    const Tensor& t = ps.value(id);
    static_assert(sizeof(double) == 8, "f64 payload layout");
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * 8));
  }
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("checkpoint missing header");
  const nlohmann::json j = nlohmann::json::parse(header);
  if (j.at("version").get<int>() != 1) throw std::runtime_error("unknown checkpoint version");

  Checkpoint ck;
  ck.config = ModelConfig::from_json(j.at("config").dump());
  ck.step = j.at("step").get<int64_t>();
  for (const auto& p : j.at("params")) {
    const auto shape = p.at("shape").get<std::vector<int64_t>>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (!in) throw std::runtime_error("checkpoint payload truncated");
    ck.params.add(p.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

}  // namespace dtp
