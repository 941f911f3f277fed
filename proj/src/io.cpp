#include "vdr/io.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

namespace vdr::io {

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  template <typename Derived>
  void f64s(const Eigen::DenseBase<Derived>& m) {
    // Row-major traversal regardless of storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::string what) : in_(in), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw Error(ErrorCode::TruncatedFile, what_ + " ends at byte " + std::to_string(in_.size()) +
                                                ", needed " + std::to_string(pos_ + n));
    }
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  template <typename Derived>
  void f64s(Eigen::DenseBase<Derived>& m) {
    need(static_cast<std::size_t>(m.size()) * 8);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_end() const {
    if (pos_ != in_.size()) {
      throw Error(ErrorCode::ShapeMismatch, what_ + " has " + std::to_string(in_.size() - pos_) +
                                                " trailing bytes");
    }
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::string what_;
  std::size_t pos_ = 0;
};

void check_magic(Reader& r, std::string_view magic, const std::string& what) {
  if (r.bytes(magic.size()) != magic) {
    throw Error(ErrorCode::BadMagic, what + " does not start with " + std::string(magic));
  }
}

void check_version(std::uint32_t found, std::uint32_t expected, const std::string& what) {
  if (found != expected) {
    throw Error(ErrorCode::FormatVersionMismatch, what + " version " + std::to_string(found) +
                                                      ", expected " + std::to_string(expected));
  }
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = line.find(sep, start);
    out.push_back(trim(line.substr(start, p == std::string_view::npos ? p : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  return out;
}

std::string line_error(std::size_t line, const std::string& detail) {
  return "line " + std::to_string(line) + ": " + detail;
}

int parse_int(std::string_view text, const std::string& what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw Error(ErrorCode::ParseError, what + ": not an integer: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_double(std::string_view text, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || p != text.data() + text.size()) {
    throw Error(ErrorCode::ParseError, what + ": not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out = open_out(path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::InvalidArgument, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Points

Dataset read_points_csv(std::istream& in) {
  std::vector<PointRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (trim(view).empty()) continue;
    const auto fields = split(view, ',');
    if (lineno == 1 && fields.size() == 4 && fields[0] == "user_id") continue;
    if (fields.size() != 4) {
      throw Error(ErrorCode::ParseError,
                  line_error(lineno, "expected 4 fields, found " + std::to_string(fields.size())));
    }
    if (fields[0].empty()) throw Error(ErrorCode::ParseError, line_error(lineno, "empty user_id"));
    PointRecord p;
    p.user_id = std::string(fields[0]);
    try {
      p.lat = parse_double(fields[1], "lat");
      p.lon = parse_double(fields[2], "lon");
      p.t = parse_double(fields[3], "t_unix");
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, line_error(lineno, e.what()));
    }
    if (!(p.lat >= -90.0 && p.lat <= 90.0) || !(p.lon >= -180.0 && p.lon <= 180.0) ||
        !std::isfinite(p.t)) {
      throw Error(ErrorCode::ParseError, line_error(lineno, "coordinate out of range"));
    }
    records.push_back(std::move(p));
  }
  return Dataset(std::move(records));
}

Dataset read_points_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_points_csv(in);
}

void write_points_csv(std::ostream& out, const Dataset& dataset) {
  out << "user_id,lat,lon,t_unix\n";
  for (const PointRecord& p : dataset.records()) {
    out << p.user_id << ',' << format_double(p.lat) << ',' << format_double(p.lon) << ','
        << format_double(p.t) << '\n';
  }
}

void write_points_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out = open_out(path);
  write_points_csv(out, dataset);
}

// ---------------------------------------------------------------------------
// Histogram

std::vector<std::uint8_t> encode_histogram(const Histogram3D& hist) {
  const GridSpec& g = hist.grid();
  Writer w;
  w.bytes("VDRH");
  w.u32(kHistogramVersion);
  w.u32(static_cast<std::uint32_t>(g.M));
  w.u32(static_cast<std::uint32_t>(g.M));
  w.u32(static_cast<std::uint32_t>(g.T));
  w.u32(0);  // reserved; keeps the f64 payload 8-byte aligned
  for (double b : {g.lat.min, g.lat.max, g.lon.min, g.lon.max, g.time.min, g.time.max}) w.f64(b);
  for (Eigen::Index i = 0; i < hist.counts().size(); ++i) w.f64(hist.counts()[i]);
  return w.take();
}

Histogram3D decode_histogram(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "histogram");
  check_magic(r, "VDRH", "histogram");
  check_version(r.u32(), kHistogramVersion, "histogram");
  const std::uint32_t m1 = r.u32(), m2 = r.u32(), t = r.u32();
  r.u32();  // reserved
  if (m1 != m2) throw Error(ErrorCode::ShapeMismatch, "histogram is not square");
  GridSpec g;
  g.M = static_cast<int>(m1);
  g.T = static_cast<int>(t);
  g.lat = {r.f64(), r.f64()};
  g.lon = {r.f64(), r.f64()};
  g.time = {r.f64(), r.f64()};
  g.validate();
  if (8.0 * static_cast<double>(m1) * m1 * t > static_cast<double>(r.remaining())) {
    throw Error(ErrorCode::TruncatedFile, "histogram counts are cut short");
  }
  Eigen::VectorXd counts(static_cast<Eigen::Index>(g.cell_count()));
  r.f64s(counts);
  r.expect_end();
  return Histogram3D(g, std::move(counts));
}

void write_histogram(const std::filesystem::path& path, const Histogram3D& hist) {
  write_file(path, encode_histogram(hist));
}

Histogram3D read_histogram(const std::filesystem::path& path) {
  return decode_histogram(read_file(path));
}

// ---------------------------------------------------------------------------
// Model

namespace {

void write_layer_shape(Writer& w, const ConvLayer& l) {
  w.u32(l.kind == LayerKind::Conv ? 0u : 1u);
  w.u32(static_cast<std::uint32_t>(l.in_channels));
  w.u32(static_cast<std::uint32_t>(l.out_channels));
  w.u32(static_cast<std::uint32_t>(l.shape.kernel));
  w.u32(static_cast<std::uint32_t>(l.shape.stride));
  w.u32(static_cast<std::uint32_t>(l.shape.padding));
  w.u32(l.relu ? 1u : 0u);
}

void check_layer_shape(Reader& r, const ConvLayer& l, std::size_t index) {
  const std::uint32_t expected[7] = {
      l.kind == LayerKind::Conv ? 0u : 1u,
      static_cast<std::uint32_t>(l.in_channels),
      static_cast<std::uint32_t>(l.out_channels),
      static_cast<std::uint32_t>(l.shape.kernel),
      static_cast<std::uint32_t>(l.shape.stride),
      static_cast<std::uint32_t>(l.shape.padding),
      l.relu ? 1u : 0u};
  for (std::uint32_t e : expected) {
    if (r.u32() != e) {
      throw Error(ErrorCode::ShapeMismatch,
                  "model layer " + std::to_string(index) + " does not match its architecture");
    }
  }
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelParams& model) {
  const Architecture a = model.architecture();
  Writer w;
  w.bytes("VDRM");
  w.u32(kModelVersion);
  for (int v : {a.hidden1, a.hidden2, a.latent_dim, a.codebook_size}) w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(model.encoder.size()));
  w.u32(static_cast<std::uint32_t>(model.decoder.size()));
  for (const ConvLayer& l : model.encoder) write_layer_shape(w, l);
  for (const ConvLayer& l : model.decoder) write_layer_shape(w, l);
  for (const auto* layers : {&model.encoder, &model.decoder}) {
    for (const ConvLayer& l : *layers) {
      w.f64s(l.weight);
      w.f64s(l.bias);
    }
  }
  w.f64s(model.codebook.entries);
  w.f64s(model.codebook.ema_cluster_size);
  w.f64s(model.codebook.ema_embed_sum);
  w.f64(model.codebook.decay);
  w.f64(model.codebook.ema_eps);
  w.f64(model.input_scale);
  return w.take();
}

ModelParams decode_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "model");
  check_magic(r, "VDRM", "model");
  check_version(r.u32(), kModelVersion, "model");
  Architecture a;
  a.hidden1 = static_cast<int>(r.u32());
  a.hidden2 = static_cast<int>(r.u32());
  a.latent_dim = static_cast<int>(r.u32());
  a.codebook_size = static_cast<int>(r.u32());
  if (a.hidden1 < 1 || a.hidden2 < 1 || a.latent_dim < 1 || a.codebook_size < 1 ||
      a.hidden1 > 4096 || a.hidden2 > 4096 || a.latent_dim > 4096 || a.codebook_size > 65536) {
    throw Error(ErrorCode::ShapeMismatch, "model architecture is implausible");
  }
  ModelParams m = ModelParams::zeros(a);
  if (r.u32() != m.encoder.size() || r.u32() != m.decoder.size()) {
    throw Error(ErrorCode::ShapeMismatch, "model layer count does not match its architecture");
  }
  std::size_t index = 0;
  for (const ConvLayer& l : m.encoder) check_layer_shape(r, l, index++);
  for (const ConvLayer& l : m.decoder) check_layer_shape(r, l, index++);
  for (auto* layers : {&m.encoder, &m.decoder}) {
    for (ConvLayer& l : *layers) {
      r.f64s(l.weight);
      r.f64s(l.bias);
    }
  }
  r.f64s(m.codebook.entries);
  r.f64s(m.codebook.ema_cluster_size);
  r.f64s(m.codebook.ema_embed_sum);
  m.codebook.decay = r.f64();
  m.codebook.ema_eps = r.f64();
  m.input_scale = r.f64();
  r.expect_end();
  return m;
}

void write_model(const std::filesystem::path& path, const ModelParams& model) {
  write_file(path, encode_model(model));
}

ModelParams read_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

// ---------------------------------------------------------------------------
// Workload

std::vector<WorkloadQuery> read_workload(std::istream& in) {
  std::vector<WorkloadQuery> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto f = split(view, ',');
    auto num = [&](std::size_t i) { return parse_double(f[i], "field " + std::to_string(i + 1)); };
    auto want = [&](std::size_t n) {
      if (f.size() != n) {
        throw Error(ErrorCode::ParseError, line_error(lineno, std::string(f[0]) + " expects " +
                                                                  std::to_string(n) + " fields"));
      }
    };
    try {
      if (f[0] == "rcq") {
        want(7);
        RangeQuery q;
        q.lat = {num(1), num(2)};
        q.lon = {num(3), num(4)};
        q.time = {num(5), num(6)};
        out.emplace_back(q);
      } else if (f[0] == "hot") {
        want(7);
        HotspotQuery q;
        q.lat = num(1);
        q.lon = num(2);
        q.t = num(3);
        q.nu = num(4);
        q.sr_m = num(5);
        if (f[6] != "inf" && !f[6].empty()) q.sr_t = num(6);
        out.emplace_back(q);
      } else if (f[0] == "fc") {
        want(4);
        out.emplace_back(ForecastQuery{parse_int(f[1], "cell_row"), parse_int(f[2], "cell_col"),
                                       parse_int(f[3], "h")});
      } else {
        throw Error(ErrorCode::ParseError, "unknown query kind '" + std::string(f[0]) + "'");
      }
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with("ParseError: line")) throw;
      throw Error(ErrorCode::ParseError, line_error(lineno, e.what()));
    }
  }
  return out;
}

std::vector<WorkloadQuery> read_workload(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_workload(in);
}

void write_workload(std::ostream& out, const std::vector<WorkloadQuery>& queries) {
  const auto d = format_double;
  for (const WorkloadQuery& wq : queries) {
    if (const auto* q = std::get_if<RangeQuery>(&wq)) {
      out << "rcq," << d(q->lat.min) << ',' << d(q->lat.max) << ',' << d(q->lon.min) << ','
          << d(q->lon.max) << ',' << d(q->time.min) << ',' << d(q->time.max) << '\n';
    } else if (const auto* h = std::get_if<HotspotQuery>(&wq)) {
      out << "hot," << d(h->lat) << ',' << d(h->lon) << ',' << d(h->t) << ',' << d(h->nu) << ','
          << d(h->sr_m) << ',' << (h->sr_t ? d(*h->sr_t) : std::string("inf")) << '\n';
    } else {
      const auto& fq = std::get<ForecastQuery>(wq);
      out << "fc," << fq.row << ',' << fq.col << ',' << fq.horizon << '\n';
    }
  }
}

void write_workload(const std::filesystem::path& path, const std::vector<WorkloadQuery>& queries) {
  std::ofstream out = open_out(path);
  write_workload(out, queries);
}

// ---------------------------------------------------------------------------
// Metrics, ledger, config

void write_metrics(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "query_id,metric,value\n";
  for (const MetricRow& r : rows) out << r.query_id << ',' << r.metric << ',' << format_double(r.value) << '\n';
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out = open_out(path);
  write_metrics(out, rows);
}

void write_ledger(std::ostream& out, const PrivacyLedger& ledger) {
  out << "label,epsilon\n";
  for (const auto& e : ledger.entries()) out << e.label << ',' << format_double(e.epsilon) << '\n';
}

void write_ledger(const std::filesystem::path& path, const PrivacyLedger& ledger) {
  std::ofstream out = open_out(path);
  write_ledger(out, ledger);
}

PrivacyLedger read_ledger(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  PrivacyLedger ledger;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = trim(line);
    if (view.empty() || (lineno == 1 && view == "label,epsilon")) continue;
    const auto f = split(view, ',');
    if (f.size() != 2) throw Error(ErrorCode::ParseError, line_error(lineno, "expected label,epsilon"));
    ledger.record(std::string(f[0]), parse_double(f[1], line_error(lineno, "epsilon")));
  }
  return ledger;
}

std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, line_error(lineno, "expected key = value"));
    }
    const auto key = trim(view.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::ParseError, line_error(lineno, "empty key"));
    out[std::string(key)] = std::string(trim(view.substr(eq + 1)));
  }
  return out;
}

}  // namespace vdr::io
