#include "partmotion/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace partmotion {

using ag::Tensor;

void CodecConfig::validate() const {
  if (codebook_size < 1) throw ConfigError("codebook_size must be >= 1");
  if (code_dim < 1) throw ConfigError("code_dim must be >= 1");
  if (downsample < 1 || (downsample & (downsample - 1)) != 0)
    throw ConfigError("downsample must be a positive power of two");
  if (width < 1) throw ConfigError("codec_width must be >= 1");
  if (res_blocks < 0) throw ConfigError("codec_res_blocks must be >= 0");
  if (commitment_weight < 0) throw ConfigError("commitment_weight must be >= 0");
  if (velocity_loss_weight < 0) throw ConfigError("velocity_loss_weight must be >= 0");
}

CodecConfig CodecConfig::from(const Config& cfg, bool is_root) {
  CodecConfig c;
  c.codebook_size = cfg.get_int("codebook_size");
  c.code_dim = cfg.get_int(is_root ? "code_dim_root" : "code_dim");
  c.downsample = cfg.get_int("downsample");
  c.width = cfg.get_int(is_root ? "codec_width_root" : "codec_width");
  c.res_blocks = cfg.get_int("codec_res_blocks");
  c.commitment_weight = cfg.get_double("commitment_weight");
  c.velocity_loss_weight = cfg.get_double("velocity_loss_weight");
  c.dead_code_window = cfg.get_int("dead_code_window");
  c.dead_code_threshold = cfg.get_int("dead_code_threshold");
  c.validate();
  return c;
}

namespace {

ConvLayer make_conv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng) {
  ConvLayer c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kernel = kernel;
  c.stride = stride;
  c.pad = pad;
  const double std = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel));
  c.w = Tensor::randn(kernel * in_ch, out_ch, std, rng).set_requires_grad(true);
  c.b = Tensor::zeros(1, out_ch).set_requires_grad(true);
  return c;
}

int downsample_stages(int r) {
  int n = 0;
  while ((1 << n) < r) ++n;
  return n;
}

void collect_conv(std::vector<ag::NamedParam>& out, const std::string& name, const ConvLayer& c) {
  out.push_back({name + ".w", c.w});
  out.push_back({name + ".b", c.b});
}

Tensor res_forward(const ResUnit& r, const Tensor& x, int batch, int t) {
  Tensor h = ag::gelu(conv_forward(r.c1, x, batch, t));
  h = conv_forward(r.c2, h, batch, t);
  return ag::add(x, h);
}

}  // namespace

ag::Tensor conv_forward(const ConvLayer& c, const Tensor& x, int batch, int t_in) {
  Tensor cols = ag::im2col(x, batch, t_in, c.kernel, c.stride, c.pad);
  return ag::add_bias(ag::matmul(cols, c.w), c.b);
}

PartCodec PartCodec::init(const std::string& name, int input_width, const CodecConfig& cfg,
                          Rng& rng) {
  cfg.validate();
  if (input_width < 1) throw std::invalid_argument("PartCodec: input width must be >= 1");
  PartCodec pc;
  pc.part_name = name;
  pc.input_width = input_width;
  pc.cfg = cfg;
  const int w = cfg.width;
  const int stages = downsample_stages(cfg.downsample);

  pc.enc_in = make_conv(input_width, w, 3, 1, 1, rng);
  for (int s = 0; s < stages; ++s) {
    pc.enc_down.push_back(make_conv(w, w, 4, 2, 1, rng));
    for (int b = 0; b < cfg.res_blocks; ++b)
      pc.enc_res.push_back({make_conv(w, w, 3, 1, 1, rng), make_conv(w, w, 1, 1, 0, rng)});
  }
  pc.enc_out = make_conv(w, cfg.code_dim, 3, 1, 1, rng);

  pc.dec_in = make_conv(cfg.code_dim, w, 3, 1, 1, rng);
  for (int s = 0; s < stages; ++s) {
    pc.dec_up.push_back(make_conv(w, w, 3, 1, 1, rng));
    for (int b = 0; b < cfg.res_blocks; ++b)
      pc.dec_res.push_back({make_conv(w, w, 3, 1, 1, rng), make_conv(w, w, 1, 1, 0, rng)});
  }
  pc.dec_out = make_conv(w, input_width, 3, 1, 1, rng);

  pc.book.codes = Tensor::randn(cfg.codebook_size, cfg.code_dim, 0.3, rng).set_requires_grad(true);
  pc.book.usage.assign(cfg.codebook_size, 0);
  return pc;
}

std::vector<ag::NamedParam> PartCodec::encoder_params() {
  std::vector<ag::NamedParam> out;
  collect_conv(out, "enc_in", enc_in);
  for (size_t i = 0; i < enc_down.size(); ++i)
    collect_conv(out, "enc_down" + std::to_string(i), enc_down[i]);
  for (size_t i = 0; i < enc_res.size(); ++i) {
    collect_conv(out, "enc_res" + std::to_string(i) + ".c1", enc_res[i].c1);
    collect_conv(out, "enc_res" + std::to_string(i) + ".c2", enc_res[i].c2);
  }
  collect_conv(out, "enc_out", enc_out);
  return out;
}

std::vector<ag::NamedParam> PartCodec::decoder_params() {
  std::vector<ag::NamedParam> out;
  collect_conv(out, "dec_in", dec_in);
  for (size_t i = 0; i < dec_up.size(); ++i)
    collect_conv(out, "dec_up" + std::to_string(i), dec_up[i]);
  for (size_t i = 0; i < dec_res.size(); ++i) {
    collect_conv(out, "dec_res" + std::to_string(i) + ".c1", dec_res[i].c1);
    collect_conv(out, "dec_res" + std::to_string(i) + ".c2", dec_res[i].c2);
  }
  collect_conv(out, "dec_out", dec_out);
  return out;
}

std::vector<ag::NamedParam> PartCodec::params() {
  auto out = encoder_params();
  auto dec = decoder_params();
  out.insert(out.end(), dec.begin(), dec.end());
  out.push_back({"codebook", book.codes});
  return out;
}

ag::Tensor PartCodec::encode_graph(const Tensor& x, int batch, int frames) const {
  if (frames % cfg.downsample != 0)
    throw std::invalid_argument("encode: frame count " + std::to_string(frames) +
                                " not divisible by downsample rate " +
                                std::to_string(cfg.downsample));
  int t = frames;
  Tensor h = ag::gelu(conv_forward(enc_in, x, batch, t));
  size_t res_idx = 0;
  for (const auto& down : enc_down) {
    h = ag::gelu(conv_forward(down, h, batch, t));
    t /= 2;
    for (int b = 0; b < cfg.res_blocks; ++b) h = res_forward(enc_res[res_idx++], h, batch, t);
  }
  return conv_forward(enc_out, h, batch, t);
}

ag::Tensor PartCodec::decode_graph(const Tensor& codes, int batch, int latent_len) const {
  int t = latent_len;
  Tensor h = ag::gelu(conv_forward(dec_in, codes, batch, t));
  size_t res_idx = 0;
  for (const auto& up : dec_up) {
    h = ag::upsample_rows(h, batch, t, 2);
    t *= 2;
    h = ag::gelu(conv_forward(up, h, batch, t));
    for (int b = 0; b < cfg.res_blocks; ++b) h = res_forward(dec_res[res_idx++], h, batch, t);
  }
  return conv_forward(dec_out, h, batch, t);
}

LatentSequence encode(const PartMotion& part, const PartCodec& codec) {
  if (part.frames % codec.cfg.downsample != 0)
    throw std::invalid_argument("encode: frame count " + std::to_string(part.frames) +
                                " not divisible by downsample rate " +
                                std::to_string(codec.cfg.downsample));
  Tensor x = Tensor::from(part.frames, part.width, part.values);
  Tensor e = codec.encode_graph(x, 1, part.frames);
  LatentSequence out;
  out.length = part.frames / codec.cfg.downsample;
  out.dim = codec.cfg.code_dim;
  out.vectors = e.values();
  return out;
}

int nearest_code_index(const double* latent, const Codebook& book) {
  const int J = book.codes.rows();
  const int d = book.codes.cols();
  const double* codes = book.codes.data();
  int best = 0;
  double best_dist = 0.0;
  for (int j = 0; j < J; ++j) {
    const double* v = codes + static_cast<int64_t>(j) * d;
    double dist = 0.0;
    for (int k = 0; k < d; ++k) {
      const double diff = latent[k] - v[k];
      dist += diff * diff;
    }
    if (j == 0 || dist < best_dist) {
      best = j;
      best_dist = dist;
    }
  }
  return best;
}

QuantizedSequence quantize(const LatentSequence& e, const Codebook& book) {
  const int d = book.codes.cols();
  if (e.dim != d) throw std::invalid_argument("quantize: latent dim does not match codebook");
  QuantizedSequence q;
  q.dim = d;
  q.indices.resize(e.length);
  q.vectors.resize(static_cast<size_t>(e.length) * d);
  for (int l = 0; l < e.length; ++l) {
    const int j = nearest_code_index(e.vectors.data() + static_cast<int64_t>(l) * d, book);
    q.indices[l] = j;
    const double* v = book.codes.data() + static_cast<int64_t>(j) * d;
    std::copy(v, v + d, q.vectors.begin() + static_cast<int64_t>(l) * d);
  }
  return q;
}

PartMotion decode(const QuantizedSequence& q, const PartCodec& codec) {
  const int L = static_cast<int>(q.indices.size());
  Tensor codes = Tensor::from(L, q.dim, q.vectors);
  Tensor y = codec.decode_graph(codes, 1, L);
  PartMotion pm;
  pm.part_name = codec.part_name;
  pm.frames = L * codec.cfg.downsample;
  pm.width = codec.input_width;
  pm.values = y.values();
  return pm;
}

void note_usage(Codebook& book, const std::vector<int>& indices) {
  for (int i : indices) ++book.usage[i];
}

void reset_dead_codes(Codebook& book, const std::vector<double>& batch_latents, int dim,
                      int64_t threshold, Rng& rng) {
  if (dim != book.codes.cols()) throw std::invalid_argument("reset_dead_codes: dim mismatch");
  const int n_latents = static_cast<int>(batch_latents.size()) / dim;
  if (n_latents == 0) throw std::invalid_argument("reset_dead_codes: empty batch");
  for (int j = 0; j < book.codes.rows(); ++j) {
    if (book.usage[j] < threshold) {
      const int pick = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_latents)));
      for (int k = 0; k < dim; ++k)
        book.codes.at(j, k) = batch_latents[static_cast<int64_t>(pick) * dim + k];
    }
    book.usage[j] = 0;
  }
}

ag::Tensor straight_through_compose(const Tensor& latents, const Tensor& codes) {
  return ag::straight_through(latents, codes);
}

VqvaeLossTerms vqvae_loss(const Tensor& target, const Tensor& recon, const Tensor& latents,
                          const Tensor& codes, int batch, int frames, const CodecConfig& cfg) {
  if (target.rows() != recon.rows() || target.cols() != recon.cols())
    throw std::invalid_argument("vqvae_loss: reconstruction shape mismatch");
  if (latents.rows() != codes.rows() || latents.cols() != codes.cols())
    throw std::invalid_argument("vqvae_loss: latent/code shape mismatch");

  VqvaeLossTerms t;
  Tensor rd = ag::sub(recon, target);
  t.reconstruction = ag::mean_all(ag::mul(rd, rd));

  Tensor cd = ag::sub(ag::detach(latents), codes);
  t.codebook = ag::mean_all(ag::mul(cd, cd));

  Tensor md = ag::sub(latents, ag::detach(codes));
  t.commitment = ag::scale(ag::mean_all(ag::mul(md, md)), cfg.commitment_weight);

  if (frames >= 2 && cfg.velocity_loss_weight > 0.0) {
    Tensor vd = ag::sub(ag::time_diff(recon, batch, frames), ag::time_diff(target, batch, frames));
    t.velocity = ag::scale(ag::mean_all(ag::mul(vd, vd)), cfg.velocity_loss_weight);
  } else {
    t.velocity = Tensor::zeros(1, 1);
  }

  t.total = ag::add(ag::add(ag::add(t.reconstruction, t.codebook), t.commitment), t.velocity);
  return t;
}

Checkpoint PartCodec::to_checkpoint() const {
  Checkpoint ck;
  ck.config["part_name"] = part_name;
  ck.config["input_width"] = std::to_string(input_width);
  ck.config["codebook_size"] = std::to_string(cfg.codebook_size);
  ck.config["code_dim"] = std::to_string(cfg.code_dim);
  ck.config["downsample"] = std::to_string(cfg.downsample);
  ck.config["codec_width"] = std::to_string(cfg.width);
  ck.config["codec_res_blocks"] = std::to_string(cfg.res_blocks);
  ck.config["commitment_weight"] = std::to_string(cfg.commitment_weight);
  ck.config["velocity_loss_weight"] = std::to_string(cfg.velocity_loss_weight);
  ck.config["dead_code_window"] = std::to_string(cfg.dead_code_window);
  ck.config["dead_code_threshold"] = std::to_string(cfg.dead_code_threshold);
  for (auto& p : const_cast<PartCodec*>(this)->params()) ck.put(p.name, p.tensor);
  ck.put_counters("codebook_usage", book.usage);
  return ck;
}

PartCodec PartCodec::from_checkpoint(const Checkpoint& ck) {
  CodecConfig cfg;
  cfg.codebook_size = std::stoi(ck.config.at("codebook_size"));
  cfg.code_dim = std::stoi(ck.config.at("code_dim"));
  cfg.downsample = std::stoi(ck.config.at("downsample"));
  cfg.width = std::stoi(ck.config.at("codec_width"));
  cfg.res_blocks = std::stoi(ck.config.at("codec_res_blocks"));
  cfg.commitment_weight = std::stod(ck.config.at("commitment_weight"));
  cfg.velocity_loss_weight = std::stod(ck.config.at("velocity_loss_weight"));
  cfg.dead_code_window = std::stoi(ck.config.at("dead_code_window"));
  cfg.dead_code_threshold = std::stoll(ck.config.at("dead_code_threshold"));
  Rng rng(0);
  PartCodec pc = init(ck.config.at("part_name"), std::stoi(ck.config.at("input_width")), cfg, rng);
  for (auto& p : pc.params()) {
    const ag::Tensor& stored = ck.tensor(p.name);
    if (stored.rows() != p.tensor.rows() || stored.cols() != p.tensor.cols())
      throw std::runtime_error("checkpoint tensor shape mismatch for " + p.name);
    std::copy(stored.data(), stored.data() + stored.size(), p.tensor.data());
  }
  pc.book.usage = ck.counter("codebook_usage");
  return pc;
}

}  // namespace partmotion
