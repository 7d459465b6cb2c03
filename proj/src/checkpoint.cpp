#include "recfno/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace recfno {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'F', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint: truncated file " + path);
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const std::string& path) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw IoError("checkpoint: truncated file " + path);
  return s;
}

}  // namespace

const Parameter& Checkpoint::find(const std::string& name) const {
  for (const NamedParameter& p : tensors)
    if (p.name == name) return p.value;
  throw IoError("checkpoint: no tensor named '" + name + "'");
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream text;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw IoError("checkpoint: metadata entry '" + k + "' contains a reserved character");
    }
    text << k << '=' << v << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, Checkpoint::kVersion);
  const std::string t = text.str();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.size()));
  out.write(t.data(), static_cast<std::streamsize>(t.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedParameter& p : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    std::visit(
        [&](const auto& tensor) {
          using S = typename std::decay_t<decltype(tensor)>::scalar_type;
          constexpr bool is_complex = std::is_same_v<S, Complex>;
          put<std::uint8_t>(out, is_complex ? 1 : 0);
          put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
          for (Index d : tensor.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
          for (Index i = 0; i < tensor.size(); ++i) {
            if constexpr (is_complex) {
              put<float>(out, static_cast<float>(tensor.values()[i].real()));
              put<float>(out, static_cast<float>(tensor.values()[i].imag()));
            } else {
              put<float>(out, static_cast<float>(tensor.values()[i]));
            }
          }
        },
        p.value);
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(in, path);
  if (version != Checkpoint::kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  }
  Checkpoint ckpt;
  std::istringstream text(get_string(in, get<std::uint32_t>(in, path), path));
  for (std::string line; std::getline(text, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint: malformed metadata line '" + line + "'");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::string name = get_string(in, get<std::uint32_t>(in, path), path);
    const auto kind = get<std::uint8_t>(in, path);
    if (kind > 1) throw IoError("checkpoint: unknown tensor kind for '" + name + "'");
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw IoError("checkpoint: implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<Index>(get<std::uint64_t>(in, path)));
    const Index size = shape_size(shape);
    if (kind == 1) {
      ComplexTensor::Array v(size);
      for (Index i = 0; i < size; ++i) {
        const float re = get<float>(in, path), im = get<float>(in, path);
        v[i] = Complex(re, im);
      }
      ckpt.tensors.push_back({std::move(name), ComplexTensor(std::move(shape), std::move(v))});
    } else {
      Tensor::Array v(size);
      for (Index i = 0; i < size; ++i) v[i] = get<float>(in, path);
      ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(v))});
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes in " + path);
  return ckpt;
}

void assign_parameters(const ParameterList& target, const ParameterList& source) {
  if (target.size() != source.size()) {
    throw IoError("checkpoint: expected " + std::to_string(target.size()) + " tensors, found " +
                  std::to_string(source.size()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    const NamedParameter& t = target[i];
    const NamedParameter& s = source[i];
    if (t.name != s.name) throw IoError("checkpoint: tensor '" + s.name + "' where '" + t.name + "' was expected");
    if (t.value.index() != s.value.index()) throw IoError("checkpoint: tensor '" + t.name + "' has the wrong kind");
    std::visit(
        [&](auto dst) {
          const auto& src = std::get<decltype(dst)>(s.value);
          if (src.shape() != dst.shape()) {
            throw IoError("checkpoint: tensor '" + t.name + "' has shape " + shape_string(src.shape()) + ", expected " +
                          shape_string(dst.shape()));
          }
          dst.values_mut() = src.values();
        },
        t.value);
  }
}

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint ckpt;
  ckpt.meta = model.config.to_key_values();
  model.norm.to_key_values(ckpt.meta);
  ckpt.meta["kind"] = "recfno";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g", model.extent.x_min, model.extent.x_max, model.extent.y_min,
                model.extent.y_max);
  ckpt.meta["grid.extent"] = buf;
  if (!model.sensors.empty()) ckpt.meta["sensors"] = format_points(model.sensors);
  ckpt.tensors = model.params.parameters();
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  auto kind = ckpt.meta.find("kind");
  if (kind == ckpt.meta.end() || kind->second != "recfno") throw IoError("checkpoint: not a RecFNO model");
  Model m;
  m.config = ModelConfig::from_key_values(ckpt.meta);
  m.norm = Normalizer::from_key_values(ckpt.meta);
  auto ext = ckpt.meta.find("grid.extent");
  if (ext == ckpt.meta.end()) throw IoError("checkpoint: missing grid.extent");
  std::istringstream es(ext->second);
  if (!(es >> m.extent.x_min >> m.extent.x_max >> m.extent.y_min >> m.extent.y_max)) {
    throw IoError("checkpoint: malformed grid.extent");
  }
  auto sensors = ckpt.meta.find("sensors");
  if (sensors != ckpt.meta.end()) m.sensors = parse_points(sensors->second);
  Rng rng(0);
  m.params = init_model(m.config, rng);
  assign_parameters(m.params.parameters(), ckpt.tensors);
  return m;
}

void save_model(const std::string& path, const Model& model) { write_checkpoint(path, model_checkpoint(model)); }

Model load_model(const std::string& path) { return model_from_checkpoint(read_checkpoint(path)); }

}  // namespace recfno
