#include "eal2d/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "eal2d/error.hpp"

namespace eal2d::defer {

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  const auto& x = a.config;
  const auto& y = b.config;
  return a.model == b.model && a.context_subsample == b.context_subsample &&
         x.learning_rate == y.learning_rate && x.batch_size == y.batch_size &&
         x.epochs == y.epochs && x.weight_decay == y.weight_decay && x.seed == y.seed &&
         x.patience == y.patience;
}

namespace {

std::string hex(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, ptr);
}

double parse_hex(const std::string& token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  bool negative = false;
  if (first != last && *first == '-') {
    negative = true;
    ++first;
  }
  auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
  if (ec != std::errc() || ptr != last) throw ParseError("checkpoint: bad real \"" + token + "\"");
  return negative ? -v : v;
}

void write_net(std::ostream& out, const std::string& name, const nn::DenseNet& net) {
  out << "net " << name << ' ' << net.layers().size() << '\n';
  for (const auto& l : net.layers()) {
    out << "layer " << l.output_dim() << ' ' << l.input_dim() << ' '
        << (l.activation == nn::Activation::Relu ? "relu" : "identity") << '\n';
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
        out << (r + c ? " " : "") << hex(l.weights(r, c));
    out << '\n';
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out << (r ? " " : "") << hex(l.bias[r]);
    out << '\n';
  }
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ParseError("checkpoint: unexpected end of file");
    return w;
  }
  void expect(const std::string& keyword) {
    const auto w = word();
    if (w != keyword) throw ParseError("checkpoint: expected \"" + keyword + "\", got \"" + w + "\"");
  }
  long long integer() {
    const auto w = word();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size())
      throw ParseError("checkpoint: bad integer \"" + w + "\"");
    return v;
  }
  unsigned long long unsigned_integer() {
    const auto w = word();
    unsigned long long v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size())
      throw ParseError("checkpoint: bad integer \"" + w + "\"");
    return v;
  }
  double real() { return parse_hex(word()); }

 private:
  std::istream& in_;
};

nn::DenseNet read_net(TokenReader& tr, const std::string& name) {
  tr.expect("net");
  tr.expect(name);
  const long long count = tr.integer();
  if (count < 1 || count > 64) throw ParseError("checkpoint: implausible layer count");
  std::vector<nn::DenseLayer> layers;
  for (long long i = 0; i < count; ++i) {
    tr.expect("layer");
    const long long rows = tr.integer();
    const long long cols = tr.integer();
    if (rows < 1 || cols < 1 || rows * cols > (1LL << 26))
      throw ParseError("checkpoint: implausible layer shape");
    const auto act = tr.word();
    nn::DenseLayer l;
    if (act == "relu") {
      l.activation = nn::Activation::Relu;
    } else if (act == "identity") {
      l.activation = nn::Activation::Identity;
    } else {
      throw ParseError("checkpoint: unknown activation \"" + act + "\"");
    }
    l.weights.resize(rows, cols);
    l.bias.resize(rows);
    for (long long r = 0; r < rows; ++r)
      for (long long c = 0; c < cols; ++c) l.weights(r, c) = tr.real();
    for (long long r = 0; r < rows; ++r) l.bias[r] = tr.real();
    layers.push_back(std::move(l));
  }
  try {
    return nn::DenseNet(std::move(layers));
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  out << "eal2d-checkpoint " << kCheckpointVersion << '\n';
  out << "method " << to_string(ckpt.model.method) << '\n';
  out << "num_classes " << ckpt.model.num_classes << '\n';
  out << "train_config " << hex(c.learning_rate) << ' ' << c.batch_size << ' ' << c.epochs << ' '
      << hex(c.weight_decay) << ' ' << c.seed << ' ' << c.patience << '\n';
  out << "context_subsample "
      << (ckpt.context_subsample ? std::to_string(*ckpt.context_subsample) : "none") << '\n';
  write_net(out, "classifier", ckpt.model.classifier);
  write_net(out, "rejector", ckpt.model.rejector);
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  TokenReader tr(in);
  tr.expect("eal2d-checkpoint");
  const long long version = tr.integer();
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  tr.expect("method");
  try {
    ckpt.model.method = parse_method(tr.word());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  tr.expect("num_classes");
  ckpt.model.num_classes = static_cast<int>(tr.integer());
  tr.expect("train_config");
  ckpt.config.learning_rate = tr.real();
  ckpt.config.batch_size = static_cast<int>(tr.integer());
  ckpt.config.epochs = static_cast<int>(tr.integer());
  ckpt.config.weight_decay = tr.real();
  ckpt.config.seed = tr.unsigned_integer();
  ckpt.config.patience = static_cast<int>(tr.integer());
  tr.expect("context_subsample");
  const auto sub = tr.word();
  if (sub != "none") {
    int v = 0;
    auto [ptr, ec] = std::from_chars(sub.data(), sub.data() + sub.size(), v);
    if (ec != std::errc() || ptr != sub.data() + sub.size())
      throw ParseError("checkpoint: bad context_subsample");
    ckpt.context_subsample = v;
  }
  ckpt.model.classifier = read_net(tr, "classifier");
  ckpt.model.rejector = read_net(tr, "rejector");
  tr.expect("end");
  if (ckpt.model.classifier.output_dim() != ckpt.model.num_classes)
    throw ParseError("checkpoint: classifier output does not match num_classes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write checkpoint " + path);
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace eal2d::defer
