#pragma once

#include <string>
#include <vector>

#include "partmotion/checkpoint.hpp"
#include "partmotion/config.hpp"
#include "partmotion/partition.hpp"
#include "partmotion/rng.hpp"
#include "partmotion/tensor.hpp"

namespace partmotion {

struct CodecConfig {
  int codebook_size = 512;  // J
  int code_dim = 128;       // d
  int downsample = 4;       // r
  int width = 128;          // conv channel width
  int res_blocks = 2;
  double commitment_weight = 1.0;  // beta
  double velocity_loss_weight = 0.5;
  int dead_code_window = 256;
  int64_t dead_code_threshold = 1;

  void validate() const;
  // Reads the codec keys; the Root part uses the *_root width/dim variants.
  static CodecConfig from(const Config& cfg, bool is_root);
};

struct Codebook {
  ag::Tensor codes;             // J x d, learnable
  std::vector<int64_t> usage;   // per-code running counters
};

struct LatentSequence {
  int length = 0;  // L = C / r
  int dim = 0;
  std::vector<double> vectors;  // L x dim, row-major
};

struct QuantizedSequence {
  int dim = 0;
  std::vector<int> indices;     // L values in [0, J)
  std::vector<double> vectors;  // the selected codes, L x dim
};

struct ConvLayer {
  ag::Tensor w;  // (kernel * in_ch) x out_ch
  ag::Tensor b;  // 1 x out_ch
  int in_ch = 0, out_ch = 0, kernel = 1, stride = 1, pad = 0;
};

struct ResUnit {
  ConvLayer c1;  // k3
  ConvLayer c2;  // k1
};

// One part's temporal VQ-VAE: strided conv encoder, nearest-code quantizer,
// upsampling conv decoder.
struct PartCodec {
  std::string part_name;
  int input_width = 0;
  CodecConfig cfg;

  ConvLayer enc_in;
  std::vector<ConvLayer> enc_down;
  std::vector<ResUnit> enc_res;  // res_blocks per down stage
  ConvLayer enc_out;

  ConvLayer dec_in;
  std::vector<ConvLayer> dec_up;
  std::vector<ResUnit> dec_res;
  ConvLayer dec_out;

  Codebook book;

  static PartCodec init(const std::string& name, int input_width, const CodecConfig& cfg, Rng& rng);

  std::vector<ag::NamedParam> params();
  std::vector<ag::NamedParam> encoder_params();
  std::vector<ag::NamedParam> decoder_params();

  // Batched graph forward; x is (batch*frames, input_width), frames % r == 0.
  ag::Tensor encode_graph(const ag::Tensor& x, int batch, int frames) const;
  // codes is (batch*latent_len, code_dim); output is (batch*latent_len*r, input_width).
  ag::Tensor decode_graph(const ag::Tensor& codes, int batch, int latent_len) const;

  Checkpoint to_checkpoint() const;
  static PartCodec from_checkpoint(const Checkpoint& ck);
};

ag::Tensor conv_forward(const ConvLayer& c, const ag::Tensor& x, int batch, int t_in);

// ---- spec-level operations on single sequences ----

// Throws std::invalid_argument when part.frames is not divisible by r.
LatentSequence encode(const PartMotion& part, const PartCodec& codec);

// indices[l] = argmin_j sum_k (e[l][k] - v[j][k])^2, ties to the lowest index.
QuantizedSequence quantize(const LatentSequence& e, const Codebook& book);

PartMotion decode(const QuantizedSequence& q, const PartCodec& codec);

// Brute-force nearest-neighbour index for one latent row.
int nearest_code_index(const double* latent, const Codebook& book);

void note_usage(Codebook& book, const std::vector<int>& indices);

// Codes used fewer than `threshold` times since the last reset are
// re-initialized to latents drawn from batch_latents; all counters restart.
void reset_dead_codes(Codebook& book, const std::vector<double>& batch_latents, int dim,
                      int64_t threshold, Rng& rng);

struct VqvaeLossTerms {
  ag::Tensor total;
  ag::Tensor reconstruction;
  ag::Tensor codebook;    // || sg(E) - Q ||^2
  ag::Tensor commitment;  // beta-weighted
  ag::Tensor velocity;    // weight-scaled frame-delta term
};

// target/recon are (batch*frames, width); latents/codes are (batch*L, d).
// codes must be an embedding of the codebook so its gradient reaches it.
VqvaeLossTerms vqvae_loss(const ag::Tensor& target, const ag::Tensor& recon,
                          const ag::Tensor& latents, const ag::Tensor& codes, int batch, int frames,
                          const CodecConfig& cfg);

// Forward value equals the selected codes; gradients pass through to the
// encoder output and the codebook receives none via this path.
ag::Tensor straight_through_compose(const ag::Tensor& latents, const ag::Tensor& codes);

}  // namespace partmotion
