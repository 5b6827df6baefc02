#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtp/graph.hpp"
#include "dtp/rng.hpp"
#include "dtp/tensor.hpp"

namespace dtp {

// Dimensions shared by every input encoder. vocab must match the vocabulary
// used to tokenize instructions.
struct EncoderDims {
  int d_model = 256;
  int t_a = 16;        // action-chunk length
  int vocab = 0;
  int lang_embed = 64;
  int image_size = 32;  // G
  int patch = 8;        // P, must divide G
  int t_img = 2;
  int views = 3;
  int bands = 8;          // Fourier bands per scalar, log-spaced over [1, 128]
  double c_max = 30.0;    // control-frequency normalization (Hz)
  int k_max = 1000;       // diffusion-step normalization

  int lowdim_tokens() const { return 1 + t_a + 2; }  // [z | chunk | c | k]
  int patches_per_view() const {
    return (image_size / patch) * (image_size / patch);
  }
  int image_units() const { return t_img * views; }
  int image_tokens() const { return image_units() * patches_per_view(); }
};

enum class TokenTag { proprio, chunk, frequency, timestep, image, text, null_token };

// A run of same-width tokens plus per-token provenance and attendability.
struct TokenSequence {
  Node* tokens = nullptr;      // [n, d_model]
  std::vector<TokenTag> tags;  // size n
  Tensor mask;                 // [n]; 0 marks pad positions attention must skip
};

// --- Fourier features (eager: encoder inputs are constants, gradients enter
// at the MLP weights) ---

// `count` log-spaced frequencies covering [1, 128].
std::vector<double> fourier_bands(int count);

// [1,n] -> [1, 2*bands*n + n]: per scalar, interleaved (sin, cos) pairs over
// the bands, then the raw values appended.
Tensor fourier_features(const Tensor& v, const std::vector<double>& bands);

// Analytic d(features)/d(v): [out_dim, n].
Tensor fourier_features_jacobian(const Tensor& v, const std::vector<double>& bands);

// --- parameter registration ---

// Registers every encoder parameter (enc.* names): shared z/chunk Fourier-MLP,
// private frequency and timestep Fourier-MLPs, low-dim positional + modality
// tables, patch projection + image adaptor, language embedding + adaptor, and
// the learned null tokens. Weights truncated-normal sigma 0.02, biases zero.
void init_encoder_params(ParameterSet& ps, const EncoderDims& d, Rng& rng);

// 2-layer GeLU MLP x[n,in] -> [n, d_model] using params <prefix>.w1/b1/w2/b2.
Node* mlp2(Graph& g, ParameterSet& ps, const std::string& prefix, Node* x);

// One Fourier-feature token: v -> features -> mlp2(prefix).
Node* fourier_mlp(Graph& g, ParameterSet& ps, const std::string& prefix, const Tensor& v,
                  const std::vector<double>& bands);

// --- encoders ---

// [z | chunk(t_a) | c | k] with the z/chunk MLP shared and c, k private;
// learned positional and modality embeddings added. c encoded as c/c_max,
// k as k/k_max. When null_chunk_and_k is set (the regression ablation), the
// chunk and timestep positions carry learned null tokens instead.
TokenSequence encode_lowdim(Graph& g, ParameterSet& ps, const EncoderDims& d,
                            const Tensor& z_pack, const Tensor& chunk_packs, double c_hz, int k,
                            bool null_chunk_and_k = false);

// Sinusoidal grid position table [t_img*views*patches x d_model]: one sub-band
// per axis (step, view, patch), even widths summing to d_model.
Tensor grid_pos_embed(const EncoderDims& d);

// images: (t_img*views) frames of image_size^2 grayscale doubles in [0,1],
// step-major then view. Patchify -> linear projection -> 2-layer adaptor ->
// + grid position embedding.
TokenSequence encode_images(Graph& g, ParameterSet& ps, const EncoderDims& d,
                            const std::vector<double>& images);

// Embedding lookup + 2-layer adaptor. Pad ids keep mask 0; an empty
// instruction encodes as the learned null text token (attendable).
TokenSequence encode_language(Graph& g, ParameterSet& ps, const EncoderDims& d,
                              const std::vector<int>& ids);

// --- stochastic modality masking (training only) ---

struct MaskDecisions {
  std::vector<uint8_t> image_units;  // one flag per (step, view)
  bool text = false;
  bool proprio = false;
};

// Independent Bernoulli(p) per maskable input.
MaskDecisions draw_modality_mask(int image_units, double p, Rng& rng);

// Replaces masked inputs with their learned null embeddings: each flagged
// image unit's patch tokens, every attendable text token, or the proprio
// token (row 0 of the low-dim stream). Shapes never change.
void apply_modality_mask(Graph& g, ParameterSet& ps, const EncoderDims& d,
                         const MaskDecisions& m, TokenSequence& lowdim, TokenSequence& images,
                         TokenSequence& text);

}  // namespace dtp
