#include "dualstream/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dualstream/error.hpp"
#include "dualstream/json.hpp"

namespace dualstream {

namespace {

constexpr char kMagic[4] = {'R', 'F', 'C', 'K'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint", 0, "truncated checkpoint");
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigurationError("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigurationError("learning_rate must be positive");
  if (epochs < 0) throw ConfigurationError("epochs must be non-negative");
  model.validate();
  sampling.validate();
  if (sampling.max_frames > model.encoder.max_frames) {
    throw ConfigurationError("sampling.max_frames exceeds the positional table size");
  }
}

std::vector<unsigned char> serialize_checkpoint(const ModelCheckpoint& checkpoint) {
  auto model = checkpoint.model;
  const auto tensors = model.tensors();

  nlohmann::json tensor_table = nlohmann::json::array();
  for (const auto& t : tensors) tensor_table.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  const nlohmann::json header = {{"format", "dualstream-checkpoint"},
                                 {"task_kind", std::string(to_string(checkpoint.task_kind))},
                                 {"categories", checkpoint.model.bank.categories},
                                 {"fold_id", checkpoint.fold_id},
                                 {"seed", checkpoint.config.seed},
                                 {"best_epoch", checkpoint.best_epoch},
                                 {"config", checkpoint.config},
                                 {"modes",
                                  {{"encoding", std::string(to_string(checkpoint.options().encoding))},
                                   {"aggregation",
                                    std::string(to_string(checkpoint.options().aggregation))},
                                   {"tta", checkpoint.uses_tta()}}},
                                 {"history", checkpoint.history},
                                 {"tensors", tensor_table}};
  const auto text = header.dump();

  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, ModelCheckpoint::kVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) put_f64(out, t.data[i]);
  }
  return out;
}

ModelCheckpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader in(bytes);
  if (in.text(4) != std::string(kMagic, 4)) throw ParseError("checkpoint", 0, "bad magic, expected RFCK");
  const auto version = in.u32();
  if (version != ModelCheckpoint::kVersion) {
    throw ParseError("checkpoint", 0, "unsupported version " + std::to_string(version));
  }
  const auto header_len = in.u32();
  nlohmann::json header;
  ModelCheckpoint ck;
  std::vector<std::string> categories;
  try {
    header = nlohmann::json::parse(in.text(header_len));
    ck.task_kind = parse_task_kind(header.at("task_kind").get<std::string>());
    ck.fold_id = header.at("fold_id").get<int>();
    ck.best_epoch = header.at("best_epoch").get<int>();
    from_json(header.at("config"), ck.config);
    ck.history = header.at("history").get<std::vector<EpochRecord>>();
    categories = header.at("categories").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint", 0, e.what());
  }
  ck.config.validate();

  ck.model.config = ck.config.model;
  ck.model.encoder = TemporalEncoderParams::zeros(ck.config.model.encoder);
  ck.model.head = ProjectionHeadParams::zeros(ck.config.model.encoder.dim,
                                              ck.config.model.hidden_dim(),
                                              ck.config.model.embed_dim);
  ck.model.bank.categories = categories;
  ck.model.bank.prototypes =
      MatrixXd::Zero(static_cast<Eigen::Index>(categories.size()), ck.config.model.embed_dim);

  auto tensors = ck.model.tensors();
  const auto& table = header.at("tensors");
  if (table.size() != tensors.size()) throw ParseError("checkpoint", 0, "tensor table mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (table[i].at("name").get<std::string>() != tensors[i].name ||
        table[i].at("rows").get<Eigen::Index>() != tensors[i].rows ||
        table[i].at("cols").get<Eigen::Index>() != tensors[i].cols) {
      throw ParseError("checkpoint", 0, "tensor '" + tensors[i].name + "' has an unexpected shape");
    }
    for (Eigen::Index k = 0; k < tensors[i].size(); ++k) tensors[i].data[k] = in.f64();
  }
  if (!in.done()) throw ParseError("checkpoint", 0, "trailing bytes after tensors");
  return ck;
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace dualstream
