#pragma once

// Toy encoder, decoder (plain, fingerprinted, baked) and watermark extractor.
//
// Image 3x32x32 in [-1,1]  --encoder-->  z: C_z x 8 x 8 in (-1,1)
// Decoder: conv C_z->64 @8, up x2, 64->64 @16, up x2, 64->32, 32->32, 32->3 @32,
// leaky ReLU between convolutions and tanh on the output.

#include <array>
#include <optional>
#include <string>

#include "teawib/wib.hpp"

namespace teawib {

inline constexpr int kImageSize = 32;
inline constexpr int kLatentSize = 8;
inline constexpr int kDecoderLayers = 5;

struct DecoderLayerSpec {
  int in, out;
  bool upsample_after;
};

inline std::array<DecoderLayerSpec, kDecoderLayers> decoder_layout(int latent_channels) {
  return {{{latent_channels, 64, true}, {64, 64, true}, {64, 32, false}, {32, 32, false}, {32, 3, false}}};
}

inline std::string decoder_layer_name(int i) { return "decoder.conv" + std::to_string(i); }

inline void require_image(const Shape& s, const char* who) {
  if (s.size() != 3 || s[0] != 3 || s[1] != kImageSize || s[2] != kImageSize)
    throw ShapeError(std::string(who) + ": expected image [3,32,32], got " + to_string(s));
}

template <typename T>
struct BasicToyEncoder {
  ConvLayer<T> c1, c2, c3;

  BasicToyEncoder() = default;
  BasicToyEncoder(int latent_channels, Rng& rng)
      : c1("encoder.conv0", 3, 32, 3, 1, rng),
        c2("encoder.conv1", 32, 32, 3, 2, rng),
        c3("encoder.conv2", 32, latent_channels, 3, 2, rng) {}

  int latent_channels() const { return c3.out_channels(); }

  struct Features {
    BasicVar<T> f1, f2, z;
  };

  Features features(BasicTape<T>& tape, const BasicVar<T>& image) {
    require_image(image.shape(), "encode");
    Features f;
    f.f1 = leaky_relu(c1(tape, image));
    f.f2 = leaky_relu(c2(tape, f.f1));
    f.z = tanh(c3(tape, f.f2));
    return f;
  }

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& image) {
    return features(tape, image).z;
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
    return out;
  }
};

template <typename T>
void require_latent(const BasicVar<T>& z, int channels) {
  const auto& s = z.shape();
  if (s.size() != 3 || s[0] != channels || s[1] != kLatentSize || s[2] != kLatentSize)
    throw ShapeError("decode: expected latent [" + std::to_string(channels) + ",8,8], got " +
                     to_string(s));
}

/// Plain pre-trained decoder; its weights become the frozen W of the WIB decoder.
template <typename T>
struct BasicToyDecoder {
  std::array<ConvLayer<T>, kDecoderLayers> convs;

  BasicToyDecoder() = default;
  BasicToyDecoder(int latent_channels, Rng& rng) {
    auto layout = decoder_layout(latent_channels);
    for (int i = 0; i < kDecoderLayers; ++i)
      convs[i] = ConvLayer<T>(decoder_layer_name(i), layout[i].in, layout[i].out, 3, 1, rng);
  }

  int latent_channels() const { return convs[0].in_channels(); }

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& z) {
    require_latent(z, latent_channels());
    auto layout = decoder_layout(latent_channels());
    BasicVar<T> x = z;
    for (int i = 0; i < kDecoderLayers; ++i) {
      x = convs[i](tape, x);
      x = i + 1 < kDecoderLayers ? leaky_relu(x) : tanh(x);
      if (layout[i].upsample_after) x = upsample_nearest(x, 2);
    }
    return x;
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    for (auto& c : convs) c.collect(out);
    return out;
  }
};

/// A user's decoder with the fingerprint folded in.
template <typename T>
struct BasicBakedDecoder {
  std::array<BasicBakedConvLayer<T>, kDecoderLayers> layers;

  int latent_channels() const { return layers[0].weight.value.dim(1); }

  /// `noise_rng` null disables the lambda_n path.
  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& z, Rng* noise_rng) {
    require_latent(z, latent_channels());
    auto layout = decoder_layout(latent_channels());
    BasicVar<T> x = z;
    for (int i = 0; i < kDecoderLayers; ++i) {
      x = layers[i].forward(tape, x, noise_rng);
      x = i + 1 < kDecoderLayers ? leaky_relu(x) : tanh(x);
      if (layout[i].upsample_after) x = upsample_nearest(x, 2);
    }
    return x;
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    for (auto& l : layers) l.collect(out);
    return out;
  }
};

/// Decoder whose every convolution (or, with inner_only, the inner three) is a WIB layer.
template <typename T>
struct BasicWibDecoder {
  BasicMappingNetwork<T> mapping;
  std::array<BasicWibConvLayer<T>, kDecoderLayers> layers;
  std::array<bool, kDecoderLayers> enabled{};
  WibOptions options;

  BasicWibDecoder() = default;
  BasicWibDecoder(const BasicToyDecoder<T>& pretrained, int d_w, int d_r, Rng& rng,
                  bool inner_only = false)
      : mapping(d_w, d_r, rng) {
    for (int i = 0; i < kDecoderLayers; ++i) {
      layers[i] = BasicWibConvLayer<T>(decoder_layer_name(i), pretrained.convs[i], d_r, rng);
      enabled[i] = !(inner_only && (i == 0 || i + 1 == kDecoderLayers));
    }
  }

  int message_bits() const { return mapping.message_bits(); }
  int fingerprint_dim() const { return mapping.fingerprint_dim(); }
  int latent_channels() const { return layers[0].in_channels(); }

  BasicVar<T> decode_with(BasicTape<T>& tape, const BasicVar<T>& z, const BasicVar<T>& r,
                          Rng* noise_rng) {
    require_latent(z, latent_channels());
    if (r.value().rank() != 1 || r.value().dim(0) != fingerprint_dim())
      throw ShapeError("decode: fingerprint has shape " + to_string(r.shape()) + ", decoder expects [" +
                       std::to_string(fingerprint_dim()) + "]");
    auto layout = decoder_layout(latent_channels());
    BasicVar<T> x = z;
    for (int i = 0; i < kDecoderLayers; ++i) {
      x = enabled[i] ? layers[i].forward(tape, r, x, noise_rng, options) : layers[i].plain(tape, x);
      x = i + 1 < kDecoderLayers ? leaky_relu(x) : tanh(x);
      if (layout[i].upsample_after) x = upsample_nearest(x, 2);
    }
    return x;
  }

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& z, const WatermarkMessage& m,
                         Rng* noise_rng) {
    return decode_with(tape, z, mapping(tape, m), noise_rng);
  }

  BasicBakedDecoder<T> bake(const WatermarkMessage& m) {
    const auto r = map_watermark(mapping, m);
    BasicBakedDecoder<T> out;
    for (int i = 0; i < kDecoderLayers; ++i)
      out.layers[i] = enabled[i] ? layers[i].bake(r, decoder_layer_name(i), options)
                                 : layers[i].bake_plain(decoder_layer_name(i));
    return out;
  }

  /// Every parameter, for checkpointing.
  ParamList<T> parameters() {
    auto out = mapping.parameters();
    for (auto& l : layers) {
      l.collect_frozen(out);
      l.collect_heads(out);
    }
    return out;
  }

  /// Parameters the WIB stage optimizes: mapping network and the heads of enabled layers.
  ParamList<T> trainable_parameters() {
    auto out = mapping.parameters();
    for (int i = 0; i < kDecoderLayers; ++i)
      if (enabled[i]) layers[i].collect_heads(out);
    return out;
  }

  ParamList<T> frozen_parameters() {
    ParamList<T> out;
    for (auto& l : layers) l.collect_frozen(out);
    return out;
  }
};

template <typename T>
struct BasicWatermarkExtractor {
  std::array<ConvLayer<T>, 4> convs;
  LinearLayer<T> head;

  BasicWatermarkExtractor() = default;
  BasicWatermarkExtractor(int d_w, Rng& rng) {
    int in = 3;
    for (int i = 0; i < 4; ++i) {
      convs[i] = ConvLayer<T>("extractor.conv" + std::to_string(i), in, 32, 3, 1, rng);
      in = 32;
    }
    head = LinearLayer<T>("extractor.head", 32, d_w, rng);
  }

  int message_bits() const { return head.out_features(); }

  BasicVar<T> operator()(BasicTape<T>& tape, const BasicVar<T>& image) {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != 3 || s[1] < 8 || s[2] < 8)
      throw ShapeError("extract: expected [3,H,W] with H,W >= 8, got " + to_string(s));
    BasicVar<T> x = image;
    for (auto& c : convs) x = leaky_relu(c(tape, x));
    return head(tape, global_avg_pool(x));
  }

  ParamList<T> parameters() {
    ParamList<T> out;
    for (auto& c : convs) c.collect(out);
    head.collect(out);
    return out;
  }
};

using ToyEncoder = BasicToyEncoder<float>;
using ToyDecoder = BasicToyDecoder<float>;
using WibDecoder = BasicWibDecoder<float>;
using BakedDecoder = BasicBakedDecoder<float>;
using WatermarkExtractor = BasicWatermarkExtractor<float>;
using MappingNetwork = BasicMappingNetwork<float>;
using WibConvLayer = BasicWibConvLayer<float>;
using BakedConvLayer = BasicBakedConvLayer<float>;

/// Evaluation helpers without gradient recording.
template <typename T>
BasicTensor<T> encode_image(BasicToyEncoder<T>& enc, const BasicTensor<T>& image) {
  BasicTape<T> tape(false);
  return enc(tape, tape.constant_ref(image)).value();
}

template <typename T>
BasicTensor<T> decode_plain(BasicToyDecoder<T>& dec, const BasicTensor<T>& z) {
  BasicTape<T> tape(false);
  return dec(tape, tape.constant_ref(z)).value();
}

template <typename T>
BasicTensor<T> decode_watermarked(BasicWibDecoder<T>& dec, const BasicTensor<T>& z,
                                  const WatermarkMessage& m, Rng* noise_rng) {
  BasicTape<T> tape(false);
  return dec(tape, tape.constant_ref(z), m, noise_rng).value();
}

template <typename T>
BasicTensor<T> decode_baked(BasicBakedDecoder<T>& dec, const BasicTensor<T>& z, Rng* noise_rng) {
  BasicTape<T> tape(false);
  return dec(tape, tape.constant_ref(z), noise_rng).value();
}

template <typename T>
BasicTensor<T> extract_logits(BasicWatermarkExtractor<T>& ext, const BasicTensor<T>& image) {
  BasicTape<T> tape(false);
  return ext(tape, tape.constant_ref(image)).value();
}

/// m'_i = [sigmoid(logit_i) > 0.5], i.e. logit_i > 0.
template <typename T>
WatermarkMessage decode_bits(const BasicTensor<T>& logits) {
  WatermarkMessage m;
  m.bits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) m.bits[i] = logits[i] > T(0);
  return m;
}

template <typename T>
WatermarkMessage extract_message(BasicWatermarkExtractor<T>& ext, const BasicTensor<T>& image) {
  return decode_bits(extract_logits(ext, image));
}

}  // namespace teawib
