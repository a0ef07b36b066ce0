#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nbed/dynamics.hpp"
#include "nbed/nbeddyn.hpp"
#include "nbed/types.hpp"

namespace nbed::io {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
/// Strict parse of a whole field; throws InputError mentioning `where`.
double parse_double(std::string_view text, std::string_view where);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Time-series CSV: header `t,x1..xn` with optional mask columns `m1..mn`
// (1 observed, 0 missing). Missing values may be written as `nan`.

struct MaskedSeries {
  TimeSeries series;
  std::optional<Matrix> mask;  // T x n of 0/1
};

void write_series_csv(std::ostream& os, const TimeSeries& series, const Matrix* mask = nullptr);
std::string series_csv(const TimeSeries& series, const Matrix* mask = nullptr);

/// Parses and validates a series CSV. Time must be uniform within 1e-9 dt;
/// single-row files need `fallback_dt`. Masked-out entries are stored as 0.
MaskedSeries read_series_csv(std::istream& is, std::optional<double> fallback_dt = std::nullopt);
MaskedSeries read_series_csv(const std::filesystem::path& path, std::optional<double> fallback_dt = std::nullopt);

/// Generic report table; cells are written verbatim.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string str() const;
};

CsvTable parse_csv_table(std::istream& is);

// ---------------------------------------------------------------------------
// Model and checkpoint documents (JSON, versioned).

inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;

std::string model_document(const TrainedModel& model);
TrainedModel parse_model_document(const std::string& text);
TrainedModel load_model(const std::filesystem::path& path);

struct CheckpointDocument {
  TrainCheckpoint state;
  std::string config_digest;  // identifies the run the checkpoint belongs to
};

std::string checkpoint_document(const CheckpointDocument& doc);
CheckpointDocument parse_checkpoint_document(const std::string& text);

// ---------------------------------------------------------------------------
// Minimal self-contained SVG plots.

struct Series2D {
  std::string label;
  std::vector<double> x, y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 400;
  bool log_y = false;
};

std::string svg_line_plot(const PlotSpec& spec, const std::vector<Series2D>& series);
std::string svg_scatter_plot(const PlotSpec& spec, const std::vector<Series2D>& series);
std::string svg_bar_chart(const PlotSpec& spec, const std::vector<std::string>& labels,
                          const std::vector<double>& values);
/// Side-by-side scatter panels in one document.
std::string svg_panels(const std::string& title, const std::vector<std::pair<PlotSpec, Series2D>>& panels);

}  // namespace nbed::io
