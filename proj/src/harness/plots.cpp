#include "dynvla/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/io/array_file.hpp"

namespace dynvla::harness {

namespace fs = std::filesystem;

std::vector<double> Telemetry::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw FormatError("telemetry has no column '" + name + "'");
  const auto c = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

Telemetry Telemetry::parse(const std::string& text) {
  Telemetry t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("telemetry is empty");
  std::istringstream head(line);
  for (std::string c; head >> c;) t.columns.push_back(c);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::vector<double> v;
    for (double x; row >> x;) v.push_back(x);
    if (v.size() != t.columns.size()) {
      throw FormatError("telemetry line " + std::to_string(lineno) + " has " + std::to_string(v.size()) +
                        " fields, expected " + std::to_string(t.columns.size()));
    }
    t.rows.push_back(std::move(v));
  }
  return t;
}

Telemetry Telemetry::read(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read telemetry " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::string tick(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
  const double w = 640, h = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    DYNVLA_EXPECT(s.x.size() == s.y.size(), "series x and y lengths differ");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  const auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
     << escape(title) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << num(px(xv)) << "\" y=\"" << h - bottom + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << tick(xv) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << num(py(yv) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\">" << escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
     << "transform=\"rotate(-90 16 " << h / 2 << ")\">" << escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) os << (k ? " " : "") << num(px(s.x[k])) << ',' << num(py(s.y[k]));
    os << "\"/>\n";
    const double ly = top + 14 + 16 * static_cast<double>(i);
    os << "<line x1=\"" << w - right - 150 << "\" y1=\"" << ly << "\" x2=\"" << w - right - 130 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << w - right - 124 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string panels_svg(const std::vector<Panel>& panels, int scale) {
  DYNVLA_EXPECT(scale >= 1, "panel scale must be positive");
  const int gap = 10, caption = 20;
  int width = gap, height = 0;
  for (const auto& p : panels) {
    width += p.image.width * scale + gap;
    height = std::max(height, p.image.height * scale);
  }
  height += caption + 2 * gap;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" shape-rendering=\"crispEdges\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  int x = gap;
  for (const auto& p : panels) {
    const auto& im = p.image;
    os << "<text x=\"" << x + im.width * scale / 2 << "\" y=\"" << gap + 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(p.caption) << "</text>\n";
    for (int r = 0; r < im.height; ++r) {
      for (int c = 0; c < im.width; ++c) {
        int rgb[3] = {0, 0, 0};
        for (int ch = 0; ch < std::min(3, im.channels); ++ch) {
          rgb[ch] = static_cast<int>(std::lround(std::clamp(im.at(r, c, ch), 0.0f, 1.0f) * 255.0f));
        }
        os << "<rect x=\"" << x + c * scale << "\" y=\"" << gap + caption + r * scale << "\" width=\"" << scale
           << "\" height=\"" << scale << "\" fill=\"rgb(" << rgb[0] << ',' << rgb[1] << ',' << rgb[2] << ")\"/>\n";
      }
    }
    x += im.width * scale + gap;
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

void add_observation(io::ArrayFile& f, const std::string& name, const world::Observation& o) {
  f.add_f32(name, {o.height, o.width, o.channels}, o.data);
}

world::Observation get_observation(const io::ArrayFile& f, const std::string& name) {
  const auto& a = f.get(name);
  if (a.shape.size() != 3) throw FormatError("observation '" + name + "' must be rank 3");
  world::Observation o;
  o.height = static_cast<int>(a.shape[0]);
  o.width = static_cast<int>(a.shape[1]);
  o.channels = static_cast<int>(a.shape[2]);
  o.data = f.f32(name);
  return o;
}

}  // namespace

void write_transfer_trial(const fs::path& path, const world::Observation& current,
                          const world::Observation& transferred, const world::Observation& future) {
  io::ArrayFile f;
  add_observation(f, "current", current);
  add_observation(f, "transferred", transferred);
  add_observation(f, "future", future);
  f.write(path);
}

PlotReport emit_plots(const fs::path& run_dir) {
  PlotReport rep;
  const fs::path out = run_dir / "plots";
  fs::create_directories(out);

  std::vector<fs::path> arms;
  if (fs::exists(run_dir)) {
    for (const auto& e : fs::directory_iterator(run_dir)) {
      const auto name = e.path().filename().string();
      if (e.is_directory() && name.rfind("tokenizer", 0) == 0 && fs::exists(e.path() / "telemetry.txt")) {
        arms.push_back(e.path());
      }
    }
  }
  std::sort(arms.begin(), arms.end());
  if (arms.empty()) {
    rep.skipped.push_back("codebook activation: no tokenizer telemetry");
  } else {
    std::vector<Series> series;
    for (const auto& arm : arms) {
      const auto t = Telemetry::read(arm / "telemetry.txt");
      Series s{arm.filename().string(), t.column("step"), t.column("active_ego")};
      const auto env = t.column("active_env");
      for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] += env[i];
      series.push_back(std::move(s));
    }
    const auto path = out / "codebook_activation.svg";
    write_text(path, line_chart_svg("Activated codes (trailing window)", "step", "active codes", series));
    rep.written.push_back(path);
  }

  if (!fs::exists(run_dir / "rft" / "telemetry.txt")) {
    rep.skipped.push_back("rft reward: no rft telemetry");
  } else {
    const auto t = Telemetry::read(run_dir / "rft" / "telemetry.txt");
    const auto path = out / "rft_reward.svg";
    write_text(path, line_chart_svg("RFT mean reward", "step", "reward",
                                    {{"mean_reward", t.column("step"), t.column("mean_reward")},
                                     {"fmt_valid_frac", t.column("step"), t.column("fmt_valid_frac")}}));
    rep.written.push_back(path);
  }

  std::vector<fs::path> trials;
  if (fs::exists(run_dir / "transfer")) {
    for (const auto& e : fs::directory_iterator(run_dir / "transfer")) {
      if (e.path().extension() == ".arrays") trials.push_back(e.path());
    }
  }
  std::sort(trials.begin(), trials.end());
  if (trials.empty()) rep.skipped.push_back("transfer panels: no transfer trials");
  for (const auto& trial : trials) {
    const auto f = io::ArrayFile::read(trial);
    const auto path = out / (trial.stem().string() + ".svg");
    write_text(path, panels_svg({{"current", get_observation(f, "current")},
                                 {"transferred decode", get_observation(f, "transferred")},
                                 {"original future", get_observation(f, "future")}}));
    rep.written.push_back(path);
  }
  return rep;
}

}  // namespace dynvla::harness
