#include "nbed/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unistd.h>

namespace nbed::io {

using json = nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view text, std::string_view where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto r = std::from_chars(first, last, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != last)
    throw InputError("invalid number '" + std::string(text) + "' at " + std::string(where));
  return v;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

bool next_line(std::istream& is, std::string& line) {
  if (!std::getline(is, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

// Snaps an estimated interval to its short decimal spelling when that is
// within rounding, so "0.01" written by us reads back as 0.01.
double snap_interval(double estimate) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", estimate);
  const double snapped = std::strtod(buf, nullptr);
  return std::abs(snapped - estimate) <= 1e-9 * std::abs(estimate) ? snapped : estimate;
}

}  // namespace

void write_series_csv(std::ostream& os, const TimeSeries& series, const Matrix* mask) {
  const std::size_t n = series.dim();
  if (mask && (static_cast<std::size_t>(mask->cols()) != n || mask->rows() != series.values.rows()))
    throw DimensionError("write_series_csv: mask shape differs from series");
  os << 't';
  for (std::size_t c = 1; c <= n; ++c) os << ",x" << c;
  if (mask)
    for (std::size_t c = 1; c <= n; ++c) os << ",m" << c;
  os << '\n';
  for (std::size_t k = 0; k < series.length(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    os << format_double(series.time_at(k));
    for (Eigen::Index c = 0; c < series.values.cols(); ++c) {
      os << ',';
      if (mask && (*mask)(r, c) == 0.0)
        os << "nan";
      else
        os << format_double(series.values(r, c));
    }
    if (mask)
      for (Eigen::Index c = 0; c < mask->cols(); ++c) os << ',' << ((*mask)(r, c) != 0.0 ? '1' : '0');
    os << '\n';
  }
}

std::string series_csv(const TimeSeries& series, const Matrix* mask) {
  std::ostringstream ss;
  write_series_csv(ss, series, mask);
  return ss.str();
}

MaskedSeries read_series_csv(std::istream& is, std::optional<double> fallback_dt) {
  std::string line;
  if (!next_line(is, line)) throw InputError("series csv: empty input");
  const auto header = split_line(line);
  if (header.empty() || header[0] != "t") throw InputError("series csv: header must start with 't'");
  std::size_t n = 0;
  while (1 + n < header.size() && header[1 + n] == "x" + std::to_string(n + 1)) ++n;
  if (n == 0) throw InputError("series csv: expected columns x1..xn after 't'");
  bool has_mask = false;
  if (header.size() != 1 + n) {
    if (header.size() != 1 + 2 * n) throw InputError("series csv: unexpected column '" + header[1 + n] + "'");
    for (std::size_t c = 0; c < n; ++c)
      if (header[1 + n + c] != "m" + std::to_string(c + 1))
        throw InputError("series csv: expected mask column m" + std::to_string(c + 1) + ", got '" +
                         header[1 + n + c] + "'");
    has_mask = true;
  }

  std::vector<double> times, values, mask;
  std::size_t row = 0;
  while (next_line(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    const std::string where = "line " + std::to_string(row + 1);
    if (cells.size() != header.size())
      throw InputError("series csv: " + where + " has " + std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(header.size()));
    times.push_back(parse_double(cells[0], where + " column t"));
    std::vector<double> m(n, 1.0);
    if (has_mask)
      for (std::size_t c = 0; c < n; ++c) {
        const auto& cell = cells[1 + n + c];
        if (cell != "0" && cell != "1")
          throw InputError("series csv: mask value '" + cell + "' at " + where + " must be 0 or 1");
        m[c] = cell == "1" ? 1.0 : 0.0;
      }
    for (std::size_t c = 0; c < n; ++c) {
      const auto& cell = cells[1 + c];
      const std::string col = where + " column x" + std::to_string(c + 1);
      if (m[c] == 0.0) {
        if (!cell.empty() && cell != "nan") parse_double(cell, col);
        values.push_back(0.0);
      } else {
        const double v = parse_double(cell, col);
        if (!std::isfinite(v)) throw InputError("series csv: non-finite value at " + col);
        values.push_back(v);
      }
    }
    mask.insert(mask.end(), m.begin(), m.end());
  }
  const std::size_t t = times.size();
  if (t == 0) throw InputError("series csv: no data rows");

  double dt = 0.0;
  if (t == 1) {
    if (!fallback_dt) throw InputError("series csv: a single row needs an explicit dt");
    dt = *fallback_dt;
  } else {
    dt = snap_interval((times.back() - times.front()) / static_cast<double>(t - 1));
  }
  if (!(dt > 0.0)) throw InputError("series csv: time column must be strictly increasing");
  for (std::size_t k = 0; k < t; ++k) {
    const double expected = times.front() + static_cast<double>(k) * dt;
    if (std::abs(times[k] - expected) > 1e-9 * dt)
      throw InputError("series csv: non-uniform time at line " + std::to_string(k + 2) + " (t=" +
                       format_double(times[k]) + ", expected " + format_double(expected) + ")");
  }

  MaskedSeries out;
  out.series.dt = dt;
  out.series.start_time = times.front();
  out.series.values = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
  if (has_mask)
    out.mask = Eigen::Map<Matrix>(mask.data(), static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
  return out;
}

MaskedSeries read_series_csv(const std::filesystem::path& path, std::optional<double> fallback_dt) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return read_series_csv(in, fallback_dt);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw DimensionError("CsvTable: row has " + std::to_string(row.size()) + " cells, header " +
                         std::to_string(header.size()));
  rows.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  auto put = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  put(header);
  for (const auto& r : rows) put(r);
  return out;
}

CsvTable parse_csv_table(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!next_line(is, line)) throw InputError("csv: empty input");
  t.header = split_line(line);
  std::size_t row = 1;
  while (next_line(is, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw InputError("csv: line " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

// ---------------------------------------------------------------------------
// JSON documents

namespace {

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError("missing key '" + (path.empty() ? key : path + "." + key) + "'");
  return *it;
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw SchemaError("wrong type for '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const json& j, const std::string& path) {
  const auto rows = get<long long>(j, "rows", path);
  const auto cols = get<long long>(j, "cols", path);
  const auto data = get<std::vector<double>>(j, "data", path);
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
    throw SchemaError(path + ": data length does not match rows x cols");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

void check_header(const json& doc, const std::string& kind, int version) {
  if (!doc.is_object()) throw SchemaError("document root must be an object");
  const auto v = get<int>(doc, "schema_version", "");
  if (v != version)
    throw SchemaError("unsupported schema_version " + std::to_string(v) + " (this build reads " +
                      std::to_string(version) + ")");
  const auto k = get<std::string>(doc, "kind", "");
  if (k != kind) throw SchemaError("document kind '" + k + "' is not '" + kind + "'");
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::string model_document(const TrainedModel& m) {
  const auto& a = m.model.architecture();
  const auto& c = m.config;
  json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["kind"] = "nbeddyn-model";
  doc["architecture"] = {{"latent_dim", a.latent_dim}, {"observed_dim", a.observed_dim},
                         {"quadratic", a.quadratic},   {"layers", a.layers},
                         {"width", a.width}};
  doc["dt"] = m.dt;
  doc["integrator"] = {{"dt", c.integrator.dt}, {"substeps", c.integrator.substeps}};
  doc["train"] = {{"lambda", c.lambda},
                  {"epochs", c.epochs},
                  {"theta_step", c.theta_step},
                  {"latent_step", c.latent_step},
                  {"beta1", c.beta1},
                  {"beta2", c.beta2},
                  {"eps", c.eps},
                  {"seed", c.seed},
                  {"latent_init_scale", c.latent_init_scale},
                  {"theta_init_scale", c.theta_init_scale},
                  {"alternating", c.alternating},
                  {"alternate_period", c.alternate_period},
                  {"polish_iterations", c.polish_iterations},
                  {"divergence_limit", c.divergence_limit}};
  doc["train_rmse"] = m.train_rmse;
  const auto theta = m.model.params();
  doc["theta"] = std::vector<double>(theta.begin(), theta.end());
  doc["train_latents"] = {{"observed", matrix_json(m.train_latents.x)}, {"latent", matrix_json(m.train_latents.y)}};
  doc["loss_history"] = m.loss_history;
  return doc.dump(1) + "\n";
}

TrainedModel parse_model_document(const std::string& text) {
  const json doc = parse_json(text);
  check_header(doc, "nbeddyn-model", kModelSchemaVersion);

  const json& ja = require(doc, "architecture", "");
  Architecture arch;
  arch.latent_dim = get<std::size_t>(ja, "latent_dim", "architecture");
  arch.observed_dim = get<std::size_t>(ja, "observed_dim", "architecture");
  arch.quadratic = get<bool>(ja, "quadratic", "architecture");
  arch.layers = get<std::size_t>(ja, "layers", "architecture");
  arch.width = get<std::size_t>(ja, "width", "architecture");
  try {
    arch.validate();
  } catch (const Error& e) {
    throw SchemaError(std::string("architecture: ") + e.what());
  }

  const auto theta = get<std::vector<double>>(doc, "theta", "");
  if (theta.size() != arch.param_count())
    throw SchemaError("theta has " + std::to_string(theta.size()) + " entries, architecture needs " +
                      std::to_string(arch.param_count()));

  TrainConfig c;
  const json& jt = require(doc, "train", "");
  c.lambda = get<double>(jt, "lambda", "train");
  c.epochs = get<int>(jt, "epochs", "train");
  c.theta_step = get<double>(jt, "theta_step", "train");
  c.latent_step = get<double>(jt, "latent_step", "train");
  c.beta1 = get<double>(jt, "beta1", "train");
  c.beta2 = get<double>(jt, "beta2", "train");
  c.eps = get<double>(jt, "eps", "train");
  c.seed = get<std::uint64_t>(jt, "seed", "train");
  c.latent_init_scale = get<double>(jt, "latent_init_scale", "train");
  c.theta_init_scale = get<double>(jt, "theta_init_scale", "train");
  c.alternating = get<bool>(jt, "alternating", "train");
  c.alternate_period = get<int>(jt, "alternate_period", "train");
  c.polish_iterations = get<int>(jt, "polish_iterations", "train");
  c.divergence_limit = get<double>(jt, "divergence_limit", "train");
  const json& ji = require(doc, "integrator", "");
  c.integrator.dt = get<double>(ji, "dt", "integrator");
  c.integrator.substeps = get<int>(ji, "substeps", "integrator");

  const json& jl = require(doc, "train_latents", "");
  LatentTrajectory lat{matrix_from(require(jl, "observed", "train_latents"), "train_latents.observed"),
                       matrix_from(require(jl, "latent", "train_latents"), "train_latents.latent")};
  if (static_cast<std::size_t>(lat.x.cols()) != arch.observed_dim ||
      static_cast<std::size_t>(lat.y.cols()) != arch.latent_dim - arch.observed_dim || lat.x.rows() != lat.y.rows())
    throw SchemaError("train_latents: shape does not match the architecture");

  TrainedModel m{BilinearODEModel(arch, theta), std::move(lat), get<std::vector<double>>(doc, "loss_history", ""), c,
                 get<double>(doc, "dt", ""), get<double>(doc, "train_rmse", "")};
  return m;
}

TrainedModel load_model(const std::filesystem::path& path) {
  try {
    return parse_model_document(read_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_document(const CheckpointDocument& d) {
  const auto& s = d.state;
  json doc;
  doc["schema_version"] = kCheckpointSchemaVersion;
  doc["kind"] = "nbeddyn-checkpoint";
  doc["config_digest"] = d.config_digest;
  doc["epochs_done"] = s.epochs_done;
  doc["theta"] = s.theta;
  doc["y"] = matrix_json(s.y);
  doc["adam"] = {{"iteration", s.adam_iteration}, {"m", s.adam_m}, {"v", s.adam_v}};
  doc["best"] = {{"theta", s.best_theta}, {"y", matrix_json(s.best_y)}, {"loss", s.best_loss}};
  doc["loss_history"] = s.loss_history;
  return doc.dump() + "\n";
}

CheckpointDocument parse_checkpoint_document(const std::string& text) {
  const json doc = parse_json(text);
  check_header(doc, "nbeddyn-checkpoint", kCheckpointSchemaVersion);
  CheckpointDocument d;
  d.config_digest = get<std::string>(doc, "config_digest", "");
  auto& s = d.state;
  s.epochs_done = get<int>(doc, "epochs_done", "");
  s.theta = get<std::vector<double>>(doc, "theta", "");
  s.y = matrix_from(require(doc, "y", ""), "y");
  const json& ja = require(doc, "adam", "");
  s.adam_iteration = get<long long>(ja, "iteration", "adam");
  s.adam_m = get<std::vector<double>>(ja, "m", "adam");
  s.adam_v = get<std::vector<double>>(ja, "v", "adam");
  const json& jb = require(doc, "best", "");
  s.best_theta = get<std::vector<double>>(jb, "theta", "best");
  s.best_y = matrix_from(require(jb, "y", "best"), "best.y");
  s.best_loss = get<double>(jb, "loss", "best");
  s.loss_history = get<std::vector<double>>(doc, "loss_history", "");
  return d;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, y0, w, h;  // plot area in pixels
  double xmin, xmax, ymin, ymax;
  bool log_y;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const {
    const double v = log_y ? std::log10(y) : y;
    return y0 + h - (v - ymin) / (ymax - ymin) * h;
  }
};

Frame make_frame(const PlotSpec& spec, double ox, double oy, const std::vector<Series2D>& series) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      double y = s.y[i];
      if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
      if (spec.log_y) {
        if (y <= 0.0) continue;
        y = std::log10(y);
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  return Frame{ox + 60.0, oy + 30.0, spec.width - 80.0, spec.height - 70.0, xmin, xmax, ymin - pad, ymax + pad,
               spec.log_y};
}

void draw_axes(std::string& out, const PlotSpec& spec, const Frame& f) {
  out += "<rect x=\"" + fmt(f.x0) + "\" y=\"" + fmt(f.y0) + "\" width=\"" + fmt(f.w) + "\" height=\"" + fmt(f.h) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.xmin + (f.xmax - f.xmin) * i / 4.0;
    const double yv = f.ymin + (f.ymax - f.ymin) * i / 4.0;
    const double xp = f.x0 + f.w * i / 4.0;
    const double yp = f.y0 + f.h - f.h * i / 4.0;
    out += "<text x=\"" + fmt(xp) + "\" y=\"" + fmt(f.y0 + f.h + 14) + "\" font-size=\"10\" text-anchor=\"middle\">" +
           tick_label(xv) + "</text>\n";
    out += "<text x=\"" + fmt(f.x0 - 4) + "\" y=\"" + fmt(yp + 3) + "\" font-size=\"10\" text-anchor=\"end\">" +
           tick_label(f.log_y ? std::pow(10.0, yv) : yv) + "</text>\n";
  }
  out += "<text x=\"" + fmt(f.x0 + f.w / 2) + "\" y=\"" + fmt(f.y0 - 10) +
         "\" font-size=\"13\" text-anchor=\"middle\">" + escape(spec.title) + "</text>\n";
  out += "<text x=\"" + fmt(f.x0 + f.w / 2) + "\" y=\"" + fmt(f.y0 + f.h + 30) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + escape(spec.x_label) + "</text>\n";
  out += "<text x=\"" + fmt(f.x0 - 45) + "\" y=\"" + fmt(f.y0 + f.h / 2) +
         "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 " + fmt(f.x0 - 45) + " " +
         fmt(f.y0 + f.h / 2) + ")\">" + escape(spec.y_label) + "</text>\n";
}

void draw_legend(std::string& out, const Frame& f, const std::vector<Series2D>& series) {
  double y = f.y0 + 12;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].label.empty()) continue;
    const char* color = kPalette[i % std::size(kPalette)];
    out += "<rect x=\"" + fmt(f.x0 + f.w - 120) + "\" y=\"" + fmt(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
           color + "\"/>\n";
    out += "<text x=\"" + fmt(f.x0 + f.w - 105) + "\" y=\"" + fmt(y + 1) + "\" font-size=\"10\">" +
           escape(series[i].label) + "</text>\n";
    y += 14;
  }
}

std::string open_svg(int width, int height) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
         "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void draw_lines(std::string& out, const Frame& f, const std::vector<Series2D>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::string pts;
    const auto flush = [&] {
      if (!pts.empty())
        out += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[i % std::size(kPalette)]) +
               "\" stroke-width=\"1.2\" points=\"" + pts + "\"/>\n";
      pts.clear();
    };
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k]) || (f.log_y && s.y[k] <= 0.0)) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += fmt(f.px(s.x[k])) + "," + fmt(f.py(s.y[k]));
    }
    flush();
  }
}

void draw_points(std::string& out, const Frame& f, const std::vector<Series2D>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k]) || (f.log_y && s.y[k] <= 0.0)) continue;
      out += "<circle cx=\"" + fmt(f.px(s.x[k])) + "\" cy=\"" + fmt(f.py(s.y[k])) + "\" r=\"1.2\" fill=\"" + color +
             "\"/>\n";
    }
  }
}

}  // namespace

std::string svg_line_plot(const PlotSpec& spec, const std::vector<Series2D>& series) {
  std::string out = open_svg(spec.width, spec.height);
  const Frame f = make_frame(spec, 0, 0, series);
  draw_axes(out, spec, f);
  draw_lines(out, f, series);
  draw_legend(out, f, series);
  return out + "</svg>\n";
}

std::string svg_scatter_plot(const PlotSpec& spec, const std::vector<Series2D>& series) {
  std::string out = open_svg(spec.width, spec.height);
  const Frame f = make_frame(spec, 0, 0, series);
  draw_axes(out, spec, f);
  draw_points(out, f, series);
  draw_legend(out, f, series);
  return out + "</svg>\n";
}

std::string svg_bar_chart(const PlotSpec& spec, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  if (labels.size() != values.size()) throw DimensionError("svg_bar_chart: labels and values differ in length");
  std::string out = open_svg(spec.width, spec.height);
  Series2D range{"", {0.0, static_cast<double>(values.size())}, {0.0, 0.0}};
  for (double v : values)
    if (std::isfinite(v)) range.y.push_back(v), range.x.push_back(0.0);
  PlotSpec s = spec;
  Frame f = make_frame(s, 0, 0, {range});
  if (!s.log_y) f.ymin = std::min(0.0, f.ymin);
  draw_axes(out, s, f);
  const double slot = f.w / static_cast<double>(std::max<std::size_t>(values.size(), 1));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || (s.log_y && values[i] <= 0.0)) continue;
    const double base = s.log_y ? f.y0 + f.h : f.py(0.0);
    const double top = f.py(values[i]);
    out += "<rect x=\"" + fmt(f.x0 + slot * (i + 0.15)) + "\" y=\"" + fmt(std::min(base, top)) + "\" width=\"" +
           fmt(slot * 0.7) + "\" height=\"" + fmt(std::abs(base - top)) + "\" fill=\"" + kPalette[0] + "\"/>\n";
    out += "<text x=\"" + fmt(f.x0 + slot * (i + 0.5)) + "\" y=\"" + fmt(f.y0 + f.h + 26) +
           "\" font-size=\"10\" text-anchor=\"middle\">" + escape(labels[i]) + "</text>\n";
  }
  return out + "</svg>\n";
}

std::string svg_panels(const std::string& title, const std::vector<std::pair<PlotSpec, Series2D>>& panels) {
  int width = 0, height = 0;
  for (const auto& p : panels) width += p.first.width, height = std::max(height, p.first.height);
  std::string out = open_svg(width, height + 24);
  out += "<text x=\"" + fmt(width / 2.0) + "\" y=\"16\" font-size=\"14\" text-anchor=\"middle\">" + escape(title) +
         "</text>\n";
  double ox = 0.0;
  for (const auto& [spec, s] : panels) {
    const Frame f = make_frame(spec, ox, 24.0, {s});
    draw_axes(out, spec, f);
    draw_points(out, f, {s});
    ox += spec.width;
  }
  return out + "</svg>\n";
}

}  // namespace nbed::io
