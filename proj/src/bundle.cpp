#include "negmm/bundle.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace negmm {
namespace {

using nlohmann::json;

std::string fmt17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

json priors_to_json(const PriorConfig& p) {
  return json{{"dc0_sd", p.dc0_sd},
              {"dc0e_sd", p.dc0e_sd},
              {"ell_invgamma_alpha", p.ell_invgamma_alpha},
              {"ell_invgamma_beta", p.ell_invgamma_beta},
              {"omega_exp_rate", p.omega_exp_rate},
              {"omega1b_ln_mu", p.omega1b_ln_mu},
              {"omega1b_ln_sd", p.omega1b_ln_sd},
              {"phi0_ln_mu", p.phi0_ln_mu},
              {"phi0_ln_sd", p.phi0_ln_sd},
              {"tau0_ln_mu", p.tau0_ln_mu},
              {"tau0_ln_sd", p.tau0_ln_sd},
              {"mask_mag_max", p.mask_mag_max},
              {"mask_freq_max", p.mask_freq_max},
              {"jitter_rel", p.jitter_rel}};
}

PriorConfig priors_from_json(const json& j) {
  PriorConfig p;
  p.dc0_sd = j.value("dc0_sd", p.dc0_sd);
  p.dc0e_sd = j.value("dc0e_sd", p.dc0e_sd);
  p.ell_invgamma_alpha = j.value("ell_invgamma_alpha", p.ell_invgamma_alpha);
  p.ell_invgamma_beta = j.value("ell_invgamma_beta", p.ell_invgamma_beta);
  p.omega_exp_rate = j.value("omega_exp_rate", p.omega_exp_rate);
  p.omega1b_ln_mu = j.value("omega1b_ln_mu", p.omega1b_ln_mu);
  p.omega1b_ln_sd = j.value("omega1b_ln_sd", p.omega1b_ln_sd);
  p.phi0_ln_mu = j.value("phi0_ln_mu", p.phi0_ln_mu);
  p.phi0_ln_sd = j.value("phi0_ln_sd", p.phi0_ln_sd);
  p.tau0_ln_mu = j.value("tau0_ln_mu", p.tau0_ln_mu);
  p.tau0_ln_sd = j.value("tau0_ln_sd", p.tau0_ln_sd);
  p.mask_mag_max = j.value("mask_mag_max", p.mask_mag_max);
  p.mask_freq_max = j.value("mask_freq_max", p.mask_freq_max);
  p.jitter_rel = j.value("jitter_rel", p.jitter_rel);
  return p;
}

json smoothed_to_json(const SmoothedHyper& s) {
  return json{{"freqs", s.freqs},          {"ell_1e", s.ell_1e},
              {"omega_1e", s.omega_1e},    {"ell_1as", s.ell_1as},
              {"omega_1as", s.omega_1as},  {"omega_1bs", s.omega_1bs},
              {"ell_ca1", s.ell_ca1},      {"omega_ca1", s.omega_ca1},
              {"omega_ca2", s.omega_ca2},  {"warnings", s.warnings}};
}

SmoothedHyper smoothed_from_json(const json& j) {
  SmoothedHyper s;
  s.freqs = j.at("freqs").get<std::vector<double>>();
  s.ell_1e = j.at("ell_1e").get<std::vector<double>>();
  s.omega_1e = j.at("omega_1e").get<std::vector<double>>();
  s.ell_1as = j.at("ell_1as").get<std::vector<double>>();
  s.omega_1as = j.at("omega_1as").get<std::vector<double>>();
  s.omega_1bs = j.at("omega_1bs").get<std::vector<double>>();
  s.ell_ca1 = j.at("ell_ca1").get<std::vector<double>>();
  s.omega_ca1 = j.at("omega_ca1").get<std::vector<double>>();
  s.omega_ca2 = j.at("omega_ca2").get<std::vector<double>>();
  if (j.contains("warnings"))
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw std::runtime_error("bad numeric field: '" + s + "'");
  }
}

}  // namespace

std::string config_hash_hex(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

FrequencyFit make_frequency_fit(std::span<const std::string> event_ids,
                                std::span<const XY> event_xy,
                                std::span<const std::string> station_ids,
                                std::span<const XY> station_xy, const CellGrid& grid,
                                const PosteriorSummary& s, const HyperParams& h,
                                double c7) {
  const int e = static_cast<int>(event_xy.size());
  const int st = static_cast<int>(station_xy.size());
  const int c = grid.ncells();
  if (s.n_events != e || s.n_stations != st || s.n_cells != c)
    throw std::invalid_argument("summary shape does not match coordinate tables");
  (void)event_ids;

  FrequencyFit fit;
  fit.freq = s.freq;
  fit.c7 = c7;
  fit.dc0_mean = s.means[0];
  fit.dc0_sd = s.sds[0];
  fit.dc0e_north_mean = s.means[1];
  fit.dc0e_north_sd = s.sds[1];
  fit.dc0e_south_mean = s.means[2];
  fit.dc0e_south_sd = s.sds[2];
  fit.phi0 = s.mean_of("phi0");
  fit.tau0 = s.mean_of("tau0");
  fit.omega_1bs = h.omega_1bs;

  fit.dc1e.term = "dc1e";
  fit.dc1e.known.assign(event_xy.begin(), event_xy.end());
  fit.dc1e.mean = s.means.segment(s.off_dc1e(), e);
  fit.dc1e.sd = s.sds.segment(s.off_dc1e(), e);
  fit.dc1e.kernel = KernelSpec{KernelFamily::exponential, h.omega_1e, h.ell_1e, 0.0};

  fit.dc1a.term = "dc1a";
  fit.dc1a.known.assign(station_xy.begin(), station_xy.end());
  fit.dc1a.mean = s.means.segment(s.off_dc1a(), st);
  fit.dc1a.sd = s.sds.segment(s.off_dc1a(), st);
  fit.dc1a.kernel = KernelSpec{KernelFamily::exponential, h.omega_1as, h.ell_1as, 0.0};

  fit.cca.term = "c_ca";
  fit.cca.known = grid.midpoints();
  fit.cca.mean = s.means.segment(s.off_cca(), c);
  fit.cca.sd = s.sds.segment(s.off_cca(), c);
  fit.cca.kernel = KernelSpec{KernelFamily::exponential_plus_nugget, h.omega_ca1,
                              h.ell_ca1, h.omega_ca2};
  fit.cca.prior_mean = c7;
  fit.cca.clamp_above_zero = true;
  fit.cca.cell_ids.resize(c);
  for (int i = 0; i < c; ++i) fit.cca.cell_ids[i] = i;

  fit.station_ids.assign(station_ids.begin(), station_ids.end());
  fit.dc1b_mean = s.means.segment(s.off_dc1b(), st);
  fit.dc1b_sd = s.sds.segment(s.off_dc1b(), st);
  return fit;
}

FrequencyFit make_frequency_fit(const Dataset& data, const PosteriorSummary& s,
                                const HyperParams& h, double c7) {
  std::vector<std::string> eids, sids;
  for (const auto& e : data.events) eids.push_back(e.id);
  for (const auto& st : data.stations) sids.push_back(st.id);
  return make_frequency_fit(eids, data.event_xy(), sids, data.station_xy(), data.grid,
                            s, h, c7);
}

void save_summary_csv(const PosteriorSummary& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "name,mean,sd,p05,p95,ess,rhat\n";
  for (std::size_t i = 0; i < s.names.size(); ++i)
    out << s.names[i] << ',' << fmt17(s.means[i]) << ',' << fmt17(s.sds[i]) << ','
        << fmt17(s.p05[i]) << ',' << fmt17(s.p95[i]) << ',' << fmt17(s.ess[i]) << ','
        << fmt17(s.rhat[i]) << '\n';
}

void save_draws_csv(const PosteriorSummary& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < s.names.size(); ++i)
    out << (i ? "," : "") << s.names[i];
  out << '\n';
  for (int r = 0; r < s.draws.rows(); ++r) {
    for (int j = 0; j < s.draws.cols(); ++j)
      out << (j ? "," : "") << fmt17(s.draws(r, j));
    out << '\n';
  }
}

PosteriorSummary load_summary_csv(const std::filesystem::path& path, double freq,
                                  Phase phase, int n_events, int n_stations,
                                  int n_cells) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  PosteriorSummary s;
  s.freq = freq;
  s.phase = phase;
  s.n_events = n_events;
  s.n_stations = n_stations;
  s.n_cells = n_cells;
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw std::runtime_error("bad summary row: " + line);
    s.names.push_back(f[0]);
    rows.push_back({parse_double(f[1]), parse_double(f[2]), parse_double(f[3]),
                    parse_double(f[4]), parse_double(f[5]), parse_double(f[6])});
  }
  const int n = static_cast<int>(rows.size());
  s.means.resize(n);
  s.sds.resize(n);
  s.p05.resize(n);
  s.p95.resize(n);
  s.ess.resize(n);
  s.rhat.resize(n);
  for (int i = 0; i < n; ++i) {
    s.means[i] = rows[i][0];
    s.sds[i] = rows[i][1];
    s.p05[i] = rows[i][2];
    s.p95[i] = rows[i][3];
    s.ess[i] = rows[i][4];
    s.rhat[i] = rows[i][5];
  }
  return s;
}

void load_draws_csv(PosteriorSummary& s, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    std::vector<double> row(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) row[i] = parse_double(f[i]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return;
  s.draws.resize(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) s.draws(r, c) = rows[r][c];
}

int ModelBundle::freq_index(double f) const {
  for (std::size_t i = 0; i < freqs.size(); ++i)
    if (std::abs(freqs[i] - f) <= 1e-6 * std::max(1.0, std::abs(f)))
      return static_cast<int>(i);
  std::ostringstream os;
  os << "frequency " << f << " Hz not in bundle; available:";
  for (double g : freqs) os << ' ' << g;
  throw std::invalid_argument(os.str());
}

FrequencyFit ModelBundle::frequency_fit(double f) const {
  const int i = freq_index(f);
  if (phase2.size() != freqs.size())
    throw std::runtime_error("bundle lacks phase-2 fits");
  return make_frequency_fit(event_ids, event_xy, station_ids, station_xy, grid,
                            phase2[i], smoothed.at(freqs[i]), c7[i]);
}

void ModelBundle::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json manifest;
  manifest["version"] = 1;
  manifest["config_hash"] = config_hash;
  manifest["seed"] = seed;
  manifest["zone"] = zone.str();
  manifest["priors"] = priors_to_json(priors);
  manifest["freqs"] = freqs;
  manifest["c7"] = c7;
  manifest["phase1_freq_indices"] = phase1_freq_indices;
  manifest["counts"] = {{"events", event_ids.size()},
                        {"stations", station_ids.size()},
                        {"cells", grid.ncells()}};
  manifest["has_aleatory"] = has_aleatory;
  std::vector<std::string> terms;
  for (const auto& [t, m] : correlations) terms.push_back(t);
  manifest["correlation_terms"] = terms;
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }

  save_grid_json(grid, dir / "grid.json");
  write_grid_csv(grid, dir / "grid.csv");
  save_region_polygons(polygons, dir / "polygons.json");

  {
    std::ofstream out(dir / "events.csv");
    out << "event_id,x,y,mag,region\n";
    for (std::size_t i = 0; i < event_ids.size(); ++i)
      out << event_ids[i] << ',' << fmt17(event_xy[i].x) << ',' << fmt17(event_xy[i].y)
          << ',' << fmt17(event_mags[i]) << ',' << region_name(event_regions[i])
          << '\n';
  }
  {
    std::ofstream out(dir / "stations.csv");
    out << "station_id,x,y\n";
    for (std::size_t i = 0; i < station_ids.size(); ++i)
      out << station_ids[i] << ',' << fmt17(station_xy[i].x) << ','
          << fmt17(station_xy[i].y) << '\n';
  }
  {
    std::ofstream out(dir / "smoothed_hyper.json");
    out << smoothed_to_json(smoothed).dump(2) << '\n';
  }
  for (std::size_t i = 0; i < phase1.size(); ++i) {
    save_summary_csv(phase1[i], dir / ("summary_phase1_" + std::to_string(i) + ".csv"));
    save_draws_csv(phase1[i], dir / ("draws_phase1_" + std::to_string(i) + ".csv"));
  }
  for (std::size_t i = 0; i < phase2.size(); ++i) {
    save_summary_csv(phase2[i], dir / ("summary_phase2_" + std::to_string(i) + ".csv"));
    save_draws_csv(phase2[i], dir / ("draws_phase2_" + std::to_string(i) + ".csv"));
  }
  if (has_aleatory) save_aleatory_json(aleatory, dir / "aleatory.json");
  if (!correlations.empty()) {
    json corr;
    for (const auto& [t, m] : correlations)
      corr[t] = {{"A", m.a}, {"B", m.b}, {"C", m.c}, {"D", m.d}};
    std::ofstream out(dir / "corr.json");
    out << corr.dump(2) << '\n';
  }
}

ModelBundle ModelBundle::load(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  ModelBundle b;
  json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("no manifest.json in " + dir.string());
    in >> manifest;
  }
  b.config_hash = manifest.at("config_hash").get<std::string>();
  b.seed = manifest.at("seed").get<std::uint64_t>();
  b.zone = UtmZone::parse(manifest.at("zone").get<std::string>());
  b.priors = priors_from_json(manifest.at("priors"));
  b.freqs = manifest.at("freqs").get<std::vector<double>>();
  b.c7 = manifest.at("c7").get<std::vector<double>>();
  b.phase1_freq_indices = manifest.at("phase1_freq_indices").get<std::vector<int>>();
  b.has_aleatory = manifest.at("has_aleatory").get<bool>();

  b.grid = load_grid_json(dir / "grid.json");
  b.polygons = load_region_polygons(dir / "polygons.json");
  {
    std::ifstream in(dir / "events.csv");
    if (!in) throw std::runtime_error("no events.csv in bundle");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      b.event_ids.push_back(f.at(0));
      b.event_xy.push_back(XY{parse_double(f.at(1)), parse_double(f.at(2))});
      b.event_mags.push_back(parse_double(f.at(3)));
      b.event_regions.push_back(region_from_label(f.at(4) == "none"
                                                      ? std::nullopt
                                                      : std::optional<std::string>(f.at(4))));
    }
  }
  {
    std::ifstream in(dir / "stations.csv");
    if (!in) throw std::runtime_error("no stations.csv in bundle");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      b.station_ids.push_back(f.at(0));
      b.station_xy.push_back(XY{parse_double(f.at(1)), parse_double(f.at(2))});
    }
  }
  {
    std::ifstream in(dir / "smoothed_hyper.json");
    if (in) {
      json j;
      in >> j;
      b.smoothed = smoothed_from_json(j);
    }
  }
  const int ne = static_cast<int>(b.event_ids.size());
  const int ns = static_cast<int>(b.station_ids.size());
  const int nc = b.grid.ncells();
  for (std::size_t i = 0; i < b.phase1_freq_indices.size(); ++i) {
    const fs::path p = dir / ("summary_phase1_" + std::to_string(i) + ".csv");
    if (!fs::exists(p)) break;
    auto s = load_summary_csv(p, b.freqs.at(b.phase1_freq_indices[i]), Phase::one, ne,
                              ns, nc);
    const fs::path d = dir / ("draws_phase1_" + std::to_string(i) + ".csv");
    if (fs::exists(d)) load_draws_csv(s, d);
    b.phase1.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < b.freqs.size(); ++i) {
    const fs::path p = dir / ("summary_phase2_" + std::to_string(i) + ".csv");
    if (!fs::exists(p)) break;
    auto s = load_summary_csv(p, b.freqs[i], Phase::two, ne, ns, nc);
    const fs::path d = dir / ("draws_phase2_" + std::to_string(i) + ".csv");
    if (fs::exists(d)) load_draws_csv(s, d);
    b.phase2.push_back(std::move(s));
  }
  if (b.has_aleatory) b.aleatory = load_aleatory_json(dir / "aleatory.json");
  {
    std::ifstream in(dir / "corr.json");
    if (in) {
      json corr;
      in >> corr;
      for (auto it = corr.begin(); it != corr.end(); ++it)
        b.correlations[it.key()] =
            CorrelationModel{it.value().at("A").get<double>(),
                             it.value().at("B").get<double>(),
                             it.value().at("C").get<double>(),
                             it.value().at("D").get<double>()};
    }
  }
  return b;
}

}  // namespace negmm
