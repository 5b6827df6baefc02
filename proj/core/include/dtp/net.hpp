#pragma once

#include <string>
#include <vector>

#include "dtp/encoders.hpp"
#include "dtp/graph.hpp"
#include "dtp/rng.hpp"

namespace dtp {

// Denoising-network shape plus ablation switches. The defaults are the
// desk-scale configuration; every dimension is adjustable.
struct ModelConfig {
  int layers = 6;
  int d_model = 256;
  int heads = 8;
  int t_a = 16;

  // input encoders
  int vocab = 0;
  int lang_embed = 64;
  int image_size = 32;
  int patch = 8;
  int t_img = 2;
  int views = 3;
  int bands = 8;
  double c_max = 30.0;
  int k_max = 1000;

  // ablations
  bool no_qknorm_rmsnorm = false;  // LayerNorm + plain attention
  bool no_mlp_decoder = false;     // single linear readout
  bool no_aci = false;             // every layer cross-attends both streams
  bool regress = false;            // direct regression: chunk/timestep nulled

  int head_dim() const { return d_model / heads; }
  EncoderDims enc_dims() const;
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Running observability for one forward pass.
struct ForwardStats {
  double max_attention_logit = 0.0;  // max |softmax input| over every attention
};

// Everything one denoising evaluation consumes.
struct NetInputs {
  Tensor z_pack;       // [1,256]
  Tensor chunk_packs;  // [t_a,256] noisy chunk (ignored under regress)
  double c_hz = 5.0;
  int k = 0;
  std::vector<double> images;  // (t_img*views) frames, image_size^2 each, in [0,1]
  std::vector<int> text_ids;
  const MaskDecisions* mask = nullptr;  // training-time modality mask
};

// Registers encoder + transformer + decoder parameters for the config.
// Attention output, feed-forward output, and decoder output weights start at
// zero, so a fresh network computes exactly its decoder bias.
void init_model_params(ParameterSet& ps, const ModelConfig& cfg, Rng& rng);

// Self-attention over x with per-head RMS-normalized q/k (scalar gains) and
// scaled logits; qknorm=false drops the normalization. Residual is the
// caller's job. Params under <prefix>.{q,k,v,out}.{w,b} and <prefix>.{gq,gk}.
Node* attention_self(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x, int heads,
                     bool qknorm, ForwardStats* stats);

// Cross-attention from x to one conditioning stream chosen by layer parity:
// image tokens on even layers, text on odd; no_aci attends the concatenation.
// cond_mask entries of 0 are excluded from the softmax.
Node* cross_attention_aci(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x,
                          int layer_index, int heads, bool qknorm, const TokenSequence& images,
                          const TokenSequence& text, bool no_aci, ForwardStats* stats);

// One pre-norm transformer block: x + SA(n(x)), then + CA(n(x)), then + FF(n(x)).
Node* dit_block(Graph& g, ParameterSet& ps, const ModelConfig& cfg, int layer_index, Node* x,
                const TokenSequence& images, const TokenSequence& text, ForwardStats* stats);

// Chunk-position readout to action space: 2-layer GeLU MLP shared across
// positions, or a single linear map under no_mlp_decoder.
Node* decode_actions(Graph& g, ParameterSet& ps, const ModelConfig& cfg, Node* chunk_tokens);

// Full denoiser: encode -> layers -> final norm -> decode. Returns [t_a,128].
Node* rdt_forward(Graph& g, ParameterSet& ps, const ModelConfig& cfg, const NetInputs& in,
                  ForwardStats* stats = nullptr);

// Checkpoints: one JSON header line (format version, config, step, parameter
// names/shapes) followed by little-endian float64 payloads in header order.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParameterSet& ps,
                     int64_t step);
struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  int64_t step = 0;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dtp
