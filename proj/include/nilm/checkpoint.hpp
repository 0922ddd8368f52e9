#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilm/model.hpp"

namespace nilm {

// On-disk checkpoint layout, format version "1":
//
//   <dir>/manifest.json   UTF-8 manifest: version, appliance label, window
//                         length, sampling period, normalization constants,
//                         layer table (kind, sizes, trainable flag, weight
//                         and bias shapes, data file), provenance strings.
//   <dir>/layer_<i>.bin   for every parameterized layer: the weight array
//                         (row-major) followed by the bias array, raw
//                         little-endian 32-bit floats, no header.
//
// The layer index <i> is the position in the manifest's layer table. Byte
// lengths must match the manifest shapes exactly; loads never return a
// partially read model.

using Provenance = std::map<std::string, std::string>;

inline constexpr const char* kCheckpointVersion = "1";
inline constexpr const char* kManifestName = "manifest.json";

namespace detail {

inline void write_f32_le(std::ofstream& out, const float* data,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(bits & 0xff),
        static_cast<unsigned char>((bits >> 8) & 0xff),
        static_cast<unsigned char>((bits >> 16) & 0xff),
        static_cast<unsigned char>((bits >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

inline void read_f32_le(std::ifstream& in, float* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw CheckpointError("parameter file shorter than manifest shapes");
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits =
        static_cast<std::uint32_t>(buf[4 * i]) |
        (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
        (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
        (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    data[i] = std::bit_cast<float>(bits);
  }
}

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

inline LayerKind kind_from_name(const std::string& s) {
  if (s == "conv1d") return LayerKind::conv1d;
  if (s == "dense") return LayerKind::dense;
  if (s == "relu") return LayerKind::relu;
  if (s == "flatten") return LayerKind::flatten;
  throw CheckpointError("unknown layer kind \"" + s + "\" in manifest");
}

}  // namespace detail

inline void save_checkpoint(const Seq2PointModel& model,
                            const std::filesystem::path& dir,
                            const Provenance& provenance = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError("cannot create checkpoint directory " +
                                dir.string());

  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["appliance"] = model.appliance;
  manifest["window_length"] = model.window_length;
  manifest["period_s"] = model.period_s;
  manifest["normalization"] = {
      {"mains", {{"mean", model.mains_norm.mean}, {"std", model.mains_norm.std}}},
      {"appliance",
       {{"mean", model.appliance_norm.mean}, {"std", model.appliance_norm.std}}}};

  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < model.specs.size(); ++i) {
    const auto& s = model.specs[i];
    nlohmann::ordered_json entry;
    entry["kind"] = detail::kind_name(s.kind);
    if (s.kind == LayerKind::conv1d) {
      entry["filters"] = s.filters;
      entry["kernel_length"] = s.kernel_length;
      entry["padding"] = s.padding == Padding::same ? "same" : "valid";
    } else if (s.kind == LayerKind::dense) {
      entry["units"] = s.units;
    }
    if (s.has_params()) {
      entry["trainable"] = s.trainable;
      entry["weight_shape"] = model.params[i].weight.shape;
      entry["bias_shape"] = model.params[i].bias.shape;
      entry["file"] = "layer_" + std::to_string(i) + ".bin";
    }
    layers.push_back(entry);
  }
  manifest["layers"] = std::move(layers);
  manifest["provenance"] = provenance;

  {
    std::ofstream out(dir / kManifestName, std::ios::binary);
    if (!out) throw CheckpointError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
  }
  for (std::size_t i = 0; i < model.specs.size(); ++i) {
    if (!model.specs[i].has_params()) continue;
    const fs::path file = dir / ("layer_" + std::to_string(i) + ".bin");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + file.string());
    detail::write_f32_le(out, model.params[i].weight.ptr(),
                         model.params[i].weight.size());
    detail::write_f32_le(out, model.params[i].bias.ptr(),
                         model.params[i].bias.size());
    if (!out) throw CheckpointError("short write to " + file.string());
  }
}

inline Seq2PointModel load_checkpoint(const std::filesystem::path& dir,
                                      Provenance* provenance_out = nullptr) {
  namespace fs = std::filesystem;
  nlohmann::json manifest;
  {
    std::ifstream in(dir / kManifestName);
    if (!in)
      throw CheckpointError("missing manifest in " + dir.string());
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("corrupt manifest: ") + e.what());
    }
  }

  try {
    if (manifest.at("format_version").get<std::string>() !=
        kCheckpointVersion)
      throw CheckpointError(
          "unsupported checkpoint format version \"" +
          manifest.at("format_version").get<std::string>() + "\"");

    Seq2PointModel model;
    model.appliance = manifest.at("appliance").get<std::string>();
    model.window_length = manifest.at("window_length").get<std::size_t>();
    model.period_s = manifest.at("period_s").get<std::int64_t>();
    const auto& norm = manifest.at("normalization");
    model.mains_norm = {norm.at("mains").at("mean").get<double>(),
                        norm.at("mains").at("std").get<double>()};
    model.appliance_norm = {norm.at("appliance").at("mean").get<double>(),
                            norm.at("appliance").at("std").get<double>()};

    for (const auto& entry : manifest.at("layers")) {
      LayerSpec spec;
      spec.kind = detail::kind_from_name(entry.at("kind").get<std::string>());
      if (spec.kind == LayerKind::conv1d) {
        spec.filters = entry.at("filters").get<std::size_t>();
        spec.kernel_length = entry.at("kernel_length").get<std::size_t>();
        spec.padding = entry.at("padding").get<std::string>() == "same"
                           ? Padding::same
                           : Padding::valid;
      } else if (spec.kind == LayerKind::dense) {
        spec.units = entry.at("units").get<std::size_t>();
      }
      if (spec.has_params())
        spec.trainable = entry.at("trainable").get<bool>();
      model.specs.push_back(spec);
    }

    // Shape algebra for the declared window length must reproduce the
    // manifest shapes exactly; anything else is a corrupt checkpoint.
    std::vector<DataShape> shapes;
    try {
      shapes = propagate_shapes(model.specs, model.window_length, 1);
    } catch (const SpecError& e) {
      throw CheckpointError(std::string("inconsistent layer table: ") +
                            e.what());
    }
    if (!(shapes.back().flat && shapes.back().len == 1))
      throw CheckpointError("checkpoint model does not end in a scalar layer");

    model.params.resize(model.specs.size());
    const auto& layers = manifest.at("layers");
    for (std::size_t i = 0; i < model.specs.size(); ++i) {
      const auto& spec = model.specs[i];
      if (!spec.has_params()) continue;
      const auto& entry = layers.at(i);
      const auto weight_shape =
          entry.at("weight_shape").get<std::vector<std::size_t>>();
      const auto bias_shape =
          entry.at("bias_shape").get<std::vector<std::size_t>>();

      std::vector<std::size_t> want_w, want_b;
      if (spec.kind == LayerKind::conv1d) {
        want_w = {spec.kernel_length, shapes[i].ch, spec.filters};
        want_b = {spec.filters};
      } else {
        want_w = {shapes[i].width(), spec.units};
        want_b = {spec.units};
      }
      const std::string file = entry.at("file").get<std::string>();
      if (weight_shape != want_w || bias_shape != want_b)
        throw CheckpointError("manifest shapes for " + file +
                              " do not match the layer table");

      const fs::path path = dir / file;
      std::error_code ec;
      const auto fsize = fs::file_size(path, ec);
      if (ec) throw CheckpointError("missing parameter file " + path.string());
      Tensor<float> w(want_w), b(want_b);
      const std::size_t expect = (w.size() + b.size()) * 4;
      if (fsize != expect)
        throw CheckpointError("parameter file " + file + " has " +
                              std::to_string(fsize) + " bytes, expected " +
                              std::to_string(expect));
      std::ifstream in(path, std::ios::binary);
      if (!in) throw CheckpointError("cannot read " + path.string());
      detail::read_f32_le(in, w.ptr(), w.size());
      detail::read_f32_le(in, b.ptr(), b.size());
      model.params[i].weight = std::move(w);
      model.params[i].bias = std::move(b);
    }

    if (provenance_out) {
      provenance_out->clear();
      if (manifest.contains("provenance"))
        for (const auto& [k, v] : manifest.at("provenance").items())
          (*provenance_out)[k] = v.get<std::string>();
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt manifest: ") + e.what());
  }
}

}  // namespace nilm
