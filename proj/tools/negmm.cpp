// Command-line pipeline for the non-ergodic ground-motion model: ingestion,
// two-phase fitting, hyperparameter smoothing, prediction, coefficient maps,
// inter-frequency correlation, spectra sampling, cross-validation and
// synthetic-data generation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "negmm/bundle.hpp"
#include "negmm/ingest.hpp"
#include "negmm/pipeline.hpp"
#include "negmm/predict.hpp"
#include "negmm/simd.hpp"
#include "negmm/validate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace negmm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;

struct GlobalOpts {
  std::string config;
  std::uint64_t seed = 1;
  int workers = 1;
  bool verbose = false;
};

struct SamplerOpts {
  int chains = 1, warmup = 500, draws = 500, max_depth = 10;
  double target_accept = 0.8;

  void attach(CLI::App* cmd) {
    cmd->add_option("--chains", chains);
    cmd->add_option("--warmup", warmup);
    cmd->add_option("--draws", draws);
    cmd->add_option("--max-depth", max_depth);
    cmd->add_option("--target-accept", target_accept);
  }
  SamplerConfig to_config(const GlobalOpts& g) const {
    SamplerConfig c;
    c.chains = chains;
    c.warmup = warmup;
    c.draws = draws;
    c.max_tree_depth = max_depth;
    c.target_accept = target_accept;
    c.seed = g.seed;
    c.workers = g.workers;
    return c;
  }
};

std::ostream& vlog(const GlobalOpts& g) {
  static std::ofstream devnull;
  if (g.verbose) return std::cerr;
  if (!devnull.is_open()) devnull.open("/dev/null");
  return devnull;
}

ScenarioRequest scenario_from_json(const fs::path& path, const ModelBundle& bundle) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scenario: " + path.string());
  json j;
  in >> j;
  const UtmProjector proj(bundle.zone);
  ScenarioRequest req;
  const GeoPoint eq{j.at("eq").at(0).get<double>(), j.at("eq").at(1).get<double>()};
  const GeoPoint sta{j.at("sta").at(0).get<double>(), j.at("sta").at(1).get<double>()};
  req.eq_xy = proj.forward(eq);
  req.sta_xy = proj.forward(sta);
  if (j.contains("cls")) {
    const GeoPoint cls{j.at("cls").at(0).get<double>(), j.at("cls").at(1).get<double>()};
    req.cls_xy = proj.forward(cls);
    req.cls_depth = j.at("cls").size() > 2 ? j.at("cls").at(2).get<double>() : 0.0;
  } else {
    req.cls_xy = req.eq_xy;
    req.cls_depth = j.value("depth_km", 0.0);
  }
  req.mag = j.at("mag").get<double>();
  if (j.contains("station_id")) req.station_id = j.at("station_id").get<std::string>();
  req.region = region_from_label(classify_region(eq, bundle.polygons));
  return req;
}

SyntheticSpec synth_spec_from_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open synth spec: " + path.string());
  json j;
  in >> j;
  SyntheticSpec s;
  s.n_events = j.value("n_events", s.n_events);
  s.n_stations = j.value("n_stations", s.n_stations);
  s.min_stations_per_event = j.value("min_stations_per_event", s.min_stations_per_event);
  s.max_stations_per_event = j.value("max_stations_per_event", s.max_stations_per_event);
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    s.grid = CellGrid{XY{g.at("origin").at(0).get<double>(),
                         g.at("origin").at(1).get<double>()},
                     g.at("dx").get<double>(), g.at("dy").get<double>(),
                     g.at("nx").get<int>(), g.at("ny").get<int>()};
  }
  if (j.contains("hyper")) {
    const json& h = j.at("hyper");
    s.hyper.ell_1e = h.value("ell_1e", s.hyper.ell_1e);
    s.hyper.omega_1e = h.value("omega_1e", s.hyper.omega_1e);
    s.hyper.ell_1as = h.value("ell_1as", s.hyper.ell_1as);
    s.hyper.omega_1as = h.value("omega_1as", s.hyper.omega_1as);
    s.hyper.omega_1bs = h.value("omega_1bs", s.hyper.omega_1bs);
    s.hyper.ell_ca1 = h.value("ell_ca1", s.hyper.ell_ca1);
    s.hyper.omega_ca1 = h.value("omega_ca1", s.hyper.omega_ca1);
    s.hyper.omega_ca2 = h.value("omega_ca2", s.hyper.omega_ca2);
  }
  s.dc0 = j.value("dc0", s.dc0);
  s.dc0e_north = j.value("dc0e_north", s.dc0e_north);
  s.dc0e_south = j.value("dc0e_south", s.dc0e_south);
  s.phi0 = j.value("phi0", s.phi0);
  s.tau0 = j.value("tau0", s.tau0);
  if (j.contains("freqs")) s.freqs = j.at("freqs").get<std::vector<double>>();
  if (j.contains("c7")) s.c7 = j.at("c7").get<std::vector<double>>();
  s.mag_lo = j.value("mag_lo", s.mag_lo);
  s.mag_hi = j.value("mag_hi", s.mag_hi);
  s.depth_min_km = j.value("depth_min_km", s.depth_min_km);
  s.depth_max_km = j.value("depth_max_km", s.depth_max_km);
  s.seed = j.value("seed", s.seed);
  return s;
}

void write_truth_json(const SyntheticTruth& t, const SyntheticSpec& spec,
                      const fs::path& path) {
  json j;
  j["hyper"] = {{"ell_1e", t.hyper.ell_1e},       {"omega_1e", t.hyper.omega_1e},
                {"ell_1as", t.hyper.ell_1as},     {"omega_1as", t.hyper.omega_1as},
                {"omega_1bs", t.hyper.omega_1bs}, {"ell_ca1", t.hyper.ell_ca1},
                {"omega_ca1", t.hyper.omega_ca1}, {"omega_ca2", t.hyper.omega_ca2}};
  j["phi0"] = t.phi0;
  j["tau0"] = t.tau0;
  j["dc0"] = t.dc0;
  j["seed"] = spec.seed;
  const auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  for (std::size_t f = 0; f < t.dc1e.size(); ++f) {
    json jf;
    jf["dc1e"] = vec(t.dc1e[f]);
    jf["dc1a"] = vec(t.dc1a[f]);
    jf["dc1b"] = vec(t.dc1b[f]);
    jf["c_ca"] = vec(t.c_ca[f]);
    jf["dB"] = vec(t.dB[f]);
    j["fields"].push_back(jf);
  }
  std::ofstream out(path);
  out << j.dump() << '\n';
}

int cmd_ingest(const GlobalOpts& g, const std::string& flatfile, const std::string& c7,
               const std::string& polygons, const std::string& grid,
               const std::string& zone, const std::string& out, bool skip_bad) {
  IngestOptions opt;
  opt.zone = UtmZone::parse(zone);
  if (!polygons.empty()) opt.polygons = load_region_polygons(polygons);
  if (!grid.empty()) opt.grid = load_grid_json(grid);
  opt.skip_bad_rows = skip_bad;
  IngestReport rep;
  Dataset data = ingest_flatfile(flatfile, c7, opt, &rep);
  std::cout << "records=" << rep.records << " events=" << rep.events
            << " stations=" << rep.stations << " cells_crossed=" << rep.cells_crossed
            << " rejected=" << rep.rejected << "\n";
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& r : rep.reject_log) std::cerr << "rejected: " << r << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    save_grid_json(data.grid, fs::path(out) / "grid.json");
    write_grid_csv(data.grid, fs::path(out) / "grid.csv");
    data.segments.write_triplets_csv(fs::path(out) / "segments.csv");
    vlog(g) << "wrote grid and segment matrix to " << out << "\n";
  }
  return kExitOk;
}

int cmd_fit(const GlobalOpts& g, const std::string& phase, const std::string& flatfile,
            const std::string& c7, const std::string& freqs_csv,
            const std::string& grid, const std::string& polygons,
            const std::string& zone, const std::string& out,
            const std::string& model_dir, const SamplerOpts& sopts) {
  std::vector<double> freqs;
  if (!freqs_csv.empty()) {
    std::stringstream ss(freqs_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) freqs.push_back(std::stod(tok));
  }

  if (phase == "all") {
    PipelineConfig cfg;
    if (!g.config.empty()) {
      cfg = PipelineConfig::from_json_file(g.config);
    } else {
      cfg.flatfile = flatfile;
      cfg.c7_sidecar = c7;
      cfg.out_dir = out;
      cfg.zone = zone;
      cfg.freqs = freqs;
      if (!grid.empty()) cfg.grid_path = grid;
      if (!polygons.empty()) cfg.polygons_path = polygons;
      cfg.sampler = sopts.to_config(g);
      cfg.seed = g.seed;
      cfg.workers = g.workers;
      std::ostringstream canon;
      canon << "fit-all|" << flatfile << '|' << c7 << '|' << freqs_csv << "|seed="
            << g.seed;
      cfg.canonical_text = canon.str();
    }
    if (cfg.out_dir.empty()) throw std::invalid_argument("--out is required");
    ModelBundle bundle = run_pipeline(cfg, g.verbose ? std::cerr : vlog(g));
    bool all_ok = true;
    for (const auto& s : bundle.phase1) all_ok = all_ok && s.converged;
    for (const auto& s : bundle.phase2) all_ok = all_ok && s.converged;
    std::cout << "bundle " << cfg.out_dir.string() << " hash=" << bundle.config_hash
              << (all_ok ? "" : " (non-converged fits present)") << "\n";
    return all_ok ? kExitOk : kExitConvergence;
  }

  // staged phase 1 / phase 2
  IngestOptions iopt;
  iopt.zone = UtmZone::parse(zone);
  if (!polygons.empty()) iopt.polygons = load_region_polygons(polygons);
  if (!grid.empty()) iopt.grid = load_grid_json(grid);
  if (!freqs.empty()) iopt.freqs = freqs;
  Dataset data = ingest_flatfile(flatfile, c7, iopt);
  if (data.n_records() == 0) throw std::invalid_argument("no records ingested");

  SamplerConfig scfg = sopts.to_config(g);
  std::vector<int> idx(data.freqs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);

  const fs::path dir = out.empty() ? fs::path(model_dir) : fs::path(out);
  if (dir.empty()) throw std::invalid_argument("--out (or --model) is required");

  if (phase == "1") {
    std::vector<PosteriorSummary> fits = fit_phase1(data, idx, scfg, PriorConfig{});
    ModelBundle bundle;
    bundle.config_hash = config_hash_hex("fit-phase1|seed=" + std::to_string(g.seed));
    bundle.seed = g.seed;
    bundle.zone = iopt.zone;
    bundle.grid = data.grid;
    bundle.polygons = iopt.polygons.empty() ? default_region_polygons() : iopt.polygons;
    bundle.freqs = data.freqs;
    bundle.c7 = data.c7;
    bundle.phase1_freq_indices = idx;
    for (const auto& e : data.events) {
      bundle.event_ids.push_back(e.id);
      bundle.event_xy.push_back(e.xy);
      bundle.event_mags.push_back(e.mag);
      bundle.event_regions.push_back(e.region);
    }
    for (const auto& s : data.stations) {
      bundle.station_ids.push_back(s.id);
      bundle.station_xy.push_back(s.xy);
    }
    bundle.smoothed = SmoothedHyper{};
    bundle.phase1 = std::move(fits);
    bundle.save(dir);
    bool ok = true;
    for (const auto& s : bundle.phase1) ok = ok && s.converged;
    std::cout << "phase-1 fits written to " << dir.string() << "\n";
    return ok ? kExitOk : kExitConvergence;
  }
  if (phase == "2") {
    ModelBundle bundle = ModelBundle::load(dir);
    if (bundle.smoothed.freqs.empty())
      throw std::invalid_argument(
          "bundle has no smoothed hyperparameters; run the smooth subcommand first");
    std::vector<PosteriorSummary> fits =
        fit_phase2(data, idx, bundle.smoothed, scfg, bundle.priors);
    bundle.freqs = data.freqs;
    bundle.c7 = data.c7;
    bundle.phase2 = std::move(fits);
    if (data.freqs.size() >= 5) {
      bundle.aleatory = extract_aleatory(data, bundle.phase2, bundle.priors);
      bundle.has_aleatory = true;
    }
    bundle.save(dir);
    bool ok = true;
    for (const auto& s : bundle.phase2) ok = ok && s.converged;
    std::cout << "phase-2 fits written to " << dir.string() << "\n";
    return ok ? kExitOk : kExitConvergence;
  }
  throw std::invalid_argument("--phase must be 1, 2 or all");
}

int cmd_smooth(const GlobalOpts& g, const std::string& model_dir) {
  ModelBundle bundle = ModelBundle::load(model_dir);
  if (bundle.phase1.empty())
    throw std::invalid_argument("bundle has no phase-1 fits to smooth");
  bundle.smoothed = smooth_hyperparameters(bundle.phase1, SmoothingRules{});
  bundle.save(model_dir);
  for (const auto& w : bundle.smoothed.warnings) std::cerr << "warning: " << w << "\n";
  vlog(g) << "smoothed hyperparameters updated\n";
  std::cout << "smoothed " << bundle.phase1.size() << " phase-1 fits in "
            << model_dir << "\n";
  return kExitOk;
}

int cmd_predict(const GlobalOpts& g, const std::string& model_dir,
                const std::string& scenario, const std::string& freqs_csv,
                const std::string& out) {
  ModelBundle bundle = ModelBundle::load(model_dir);
  const ScenarioRequest base = scenario_from_json(scenario, bundle);
  std::vector<double> freqs;
  if (freqs_csv.empty()) {
    freqs = bundle.freqs;
  } else {
    std::stringstream ss(freqs_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) freqs.push_back(std::stod(tok));
  }
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os.precision(17);
  os << "freq,median,epistemic_sd,tau0,phi0,total_aleatory,dc0,dc0e,dc1e,dc1a,dc1b,"
        "path,dc1e_sd,dc1a_sd,dc1b_sd,path_sd\n";
  for (double f : freqs) {
    FrequencyFit fit = bundle.frequency_fit(f);
    ScenarioRequest req = base;
    req.freq = f;
    const ScenarioPrediction p =
        predict_scenario(req, fit, bundle.grid, bundle.priors,
                         bundle.has_aleatory ? &bundle.aleatory : nullptr);
    os << f << ',' << p.median << ',' << p.epistemic_sd << ',' << p.tau0 << ','
       << p.phi0 << ',' << p.total_aleatory << ',' << p.dc0_mean << ',' << p.dc0e_mean
       << ',' << p.dc1e_mean << ',' << p.dc1a_mean << ',' << p.dc1b_mean << ','
       << p.path_mean << ',' << std::sqrt(p.dc1e_var) << ',' << std::sqrt(p.dc1a_var)
       << ',' << std::sqrt(p.dc1b_var) << ',' << std::sqrt(p.path_var) << '\n';
  }
  vlog(g) << "predictions written to " << out << "\n";
  std::cout << "predicted " << freqs.size() << " frequencies -> " << out << "\n";
  return kExitOk;
}

int cmd_map(const GlobalOpts& g, const std::string& model_dir, const std::string& term,
            double freq, const std::string& bbox_csv, double res_km,
            const std::string& out) {
  ModelBundle bundle = ModelBundle::load(model_dir);
  FrequencyFit fit = bundle.frequency_fit(freq);
  const CoefficientField* field = nullptr;
  if (term == "dc1e") field = &fit.dc1e;
  else if (term == "dc1a") field = &fit.dc1a;
  else if (term == "cca" || term == "c_ca") field = &fit.cca;
  else throw std::invalid_argument("--term must be dc1e, dc1a or cca");

  std::vector<double> bb;
  {
    std::stringstream ss(bbox_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) bb.push_back(std::stod(tok));
  }
  if (bb.size() != 4)
    throw std::invalid_argument("--bbox wants lat1,lon1,lat2,lon2");
  const UtmProjector proj(bundle.zone);
  const XY a = proj.forward(GeoPoint{std::min(bb[0], bb[2]), std::min(bb[1], bb[3])});
  const XY b = proj.forward(GeoPoint{std::max(bb[0], bb[2]), std::max(bb[1], bb[3])});
  if (!(res_km > 0.0)) throw std::invalid_argument("--res-km must be positive");
  std::vector<XY> query;
  for (double y = std::min(a.y, b.y); y <= std::max(a.y, b.y) + 1e-9; y += res_km)
    for (double x = std::min(a.x, b.x); x <= std::max(a.x, b.x) + 1e-9; x += res_km)
      query.push_back(XY{x, y});

  const CoefficientMap map = export_coefficient_map(*field, query, proj);
  const fs::path path(out);
  if (path.extension() == ".geojson" || path.extension() == ".json")
    write_coefficient_map_geojson(map, path);
  else
    write_coefficient_map_csv(map, path);
  vlog(g) << "map with " << query.size() << " points written to " << out << "\n";
  std::cout << "map " << term << " f=" << freq << " -> " << out << " ("
            << query.size() << " points)\n";
  return kExitOk;
}

int cmd_correlate(const GlobalOpts& g, const std::string& model_dir,
                  const std::string& terms_csv, const std::string& out) {
  ModelBundle bundle = ModelBundle::load(model_dir);
  if (bundle.phase2.size() < 5)
    throw std::invalid_argument(
        "correlation fitting needs >= 5 fitted frequencies in the bundle");
  std::vector<std::string> terms;
  {
    std::stringstream ss(terms_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) terms.push_back(tok);
  }
  const PosteriorSummary& ref = bundle.phase2.front();
  json corr;
  for (const std::string& t : terms) {
    int offset, count;
    if (t == "dc1e") { offset = ref.off_dc1e(); count = ref.n_events; }
    else if (t == "dc1a") { offset = ref.off_dc1a(); count = ref.n_stations; }
    else if (t == "dc1b") { offset = ref.off_dc1b(); count = ref.n_stations; }
    else if (t == "cca") { offset = ref.off_cca(); count = ref.n_cells; }
    else throw std::invalid_argument("unknown term: " + t);
    const EmpiricalCorr emp = empirical_corr_from_fits(bundle.phase2, t, offset, count);
    const CorrelationFit fit = fit_correlation_model(emp);
    bundle.correlations[t] = fit.model;
    corr[t] = {{"A", fit.model.a},
               {"B", fit.model.b},
               {"C", fit.model.c},
               {"D", fit.model.d},
               {"weighted_rss", fit.weighted_rss},
               {"n_points", emp.points.size()}};
    vlog(g) << t << ": A=" << fit.model.a << " B=" << fit.model.b
            << " C=" << fit.model.c << " D=" << fit.model.d << "\n";
  }
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os << corr.dump(2) << '\n';
  bundle.save(model_dir);
  std::cout << "fitted " << terms.size() << " correlation models -> " << out << "\n";
  return kExitOk;
}

int cmd_sample_spectra(const GlobalOpts& g, const std::string& model_dir,
                       const std::string& scenario, int n_samples,
                       const std::string& out) {
  ModelBundle bundle = ModelBundle::load(model_dir);
  if (bundle.freqs.size() < 2)
    throw std::invalid_argument("spectra sampling needs >= 2 fitted frequencies");
  const ScenarioRequest base = scenario_from_json(scenario, bundle);

  const int nf = static_cast<int>(bundle.freqs.size());
  std::vector<ScenarioPrediction> preds(nf);
  Eigen::MatrixXd term_sds(nf, 4);
  for (int i = 0; i < nf; ++i) {
    FrequencyFit fit = bundle.frequency_fit(bundle.freqs[i]);
    ScenarioRequest req = base;
    req.freq = bundle.freqs[i];
    preds[i] = predict_scenario(req, fit, bundle.grid, bundle.priors,
                                bundle.has_aleatory ? &bundle.aleatory : nullptr);
    term_sds(i, 0) = std::sqrt(preds[i].dc1e_var);
    term_sds(i, 1) = std::sqrt(preds[i].dc1a_var);
    term_sds(i, 2) = std::sqrt(preds[i].dc1b_var);
    term_sds(i, 3) = std::sqrt(preds[i].path_var);
  }

  const char* term_names[4] = {"dc1e", "dc1a", "dc1b", "cca"};
  Eigen::MatrixXd samples = Eigen::MatrixXd::Zero(n_samples, nf);
  for (int t = 0; t < 4; ++t) {
    CorrelationModel model;
    const auto it = bundle.correlations.find(term_names[t]);
    if (it != bundle.correlations.end()) {
      model = it->second;
    } else {
      for (const auto& ref : reference_correlation_models())
        if (ref.term == term_names[t]) model = ref.model;
      std::cerr << "warning: using reference correlation coefficients for "
                << term_names[t] << "\n";
    }
    Rng rng = Rng::substream(g.seed, std::string("spectra/") + term_names[t]);
    std::vector<double> sds(term_sds.col(t).data(), term_sds.col(t).data() + nf);
    samples += sample_correlated_terms(model, sds, bundle.freqs, n_samples, rng);
  }

  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os.precision(17);
  os << "freq,median,epistemic_sd";
  for (int s = 0; s < n_samples; ++s) os << ",sample_" << s;
  os << '\n';
  for (int i = 0; i < nf; ++i) {
    os << bundle.freqs[i] << ',' << preds[i].median << ',' << preds[i].epistemic_sd;
    for (int s = 0; s < n_samples; ++s) os << ',' << preds[i].median + samples(s, i);
    os << '\n';
  }
  vlog(g) << "spectra samples written to " << out << "\n";
  std::cout << "sampled " << n_samples << " spectra -> " << out << "\n";
  return kExitOk;
}

int cmd_crossval(const GlobalOpts& g, const std::string& flatfile, const std::string& c7,
                 int k, double freq, const std::string& zone, const std::string& out,
                 bool zero_dc1e, const SamplerOpts& sopts, int phase1_warmup,
                 int phase1_draws) {
  IngestOptions iopt;
  iopt.zone = UtmZone::parse(zone);
  Dataset data = ingest_flatfile(flatfile, c7, iopt);
  if (data.n_records() == 0) throw std::invalid_argument("no records ingested");

  CrossvalConfig cfg;
  cfg.k = k;
  cfg.seed = g.seed;
  cfg.freq_index = freq > 0.0 ? data.freq_index(freq) : 0;
  cfg.sampler = sopts.to_config(g);
  cfg.zero_dc1e = zero_dc1e;

  // pin hyperparameters to a full-data phase-1 fit at the target frequency
  SamplerConfig p1cfg = cfg.sampler;
  p1cfg.warmup = phase1_warmup > 0 ? phase1_warmup : cfg.sampler.warmup;
  p1cfg.draws = phase1_draws > 0 ? phase1_draws : cfg.sampler.draws;
  vlog(g) << "fitting full-data phase 1 for pinned hyperparameters\n";
  const PosteriorSummary p1 =
      fit_frequency(data, cfg.freq_index, Phase::one, p1cfg, cfg.priors);
  HyperParams pinned;
  pinned.ell_1e = p1.mean_of("ell_1e");
  pinned.omega_1e = p1.mean_of("omega_1e");
  pinned.ell_1as = p1.mean_of("ell_1as");
  pinned.omega_1as = p1.mean_of("omega_1as");
  pinned.omega_1bs = p1.mean_of("omega_1bs");
  pinned.ell_ca1 = p1.mean_of("ell_ca1");
  pinned.omega_ca1 = p1.mean_of("omega_ca1");
  pinned.omega_ca2 = p1.mean_of("omega_ca2");

  const CrossvalReport report = crossval(data, pinned, cfg);
  json j;
  j["k"] = cfg.k;
  j["seed"] = cfg.seed;
  j["freq"] = data.freqs.at(cfg.freq_index);
  j["avg_rmse_nonergodic"] = report.avg_nonergodic;
  j["avg_rmse_ergodic"] = report.avg_ergodic;
  j["n_failed"] = report.n_failed;
  for (const auto& fr : report.folds) {
    j["folds"].push_back({{"fold", fr.fold},
                          {"n_test", fr.n_test},
                          {"rmse_nonergodic", fr.rmse_nonergodic},
                          {"rmse_ergodic", fr.rmse_ergodic},
                          {"failed", fr.failed},
                          {"note", fr.note}});
  }
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write " + out);
  os << j.dump(2) << '\n';
  std::cout << "crossval k=" << cfg.k
            << " rmse nonergodic=" << report.avg_nonergodic
            << " ergodic=" << report.avg_ergodic << " failed=" << report.n_failed
            << "\n";
  return report.n_failed > 0 ? kExitConvergence : kExitOk;
}

int cmd_synth(const GlobalOpts& g, const std::string& spec_path, const std::string& out,
              const std::string& zone) {
  SyntheticSpec spec = synth_spec_from_json(spec_path);
  if (g.seed != 1) spec.seed = g.seed;
  SyntheticTruth truth;
  const Dataset data = generate_synthetic(spec, &truth);
  fs::create_directories(out);
  write_flatfile(data, fs::path(out) / "flatfile.csv", fs::path(out) / "c7.json",
                 UtmZone::parse(zone));
  save_grid_json(data.grid, fs::path(out) / "grid.json");
  write_truth_json(truth, spec, fs::path(out) / "truth.json");
  std::cout << "synthetic dataset: " << data.n_records() << " records, "
            << data.n_events() << " events, " << data.n_stations() << " stations -> "
            << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-ergodic EAS ground-motion model toolchain"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config, "pipeline config JSON");
  app.add_option("--seed", g.seed, "root seed for all random substreams");
  app.add_option("--workers", g.workers, "concurrent jobs");
  app.add_flag("--verbose", g.verbose, "log progress to stderr");

  // ingest
  auto* ing = app.add_subcommand("ingest", "read a flatfile and build the cell grid");
  std::string in_flat, in_c7, in_poly, in_grid, in_zone = "11N", in_out;
  bool in_skip = false;
  ing->add_option("--flatfile", in_flat)->required();
  ing->add_option("--c7", in_c7)->required();
  ing->add_option("--polygons", in_poly);
  ing->add_option("--grid", in_grid);
  ing->add_option("--zone", in_zone);
  ing->add_option("--out", in_out);
  ing->add_flag("--skip-bad-rows", in_skip);

  // fit
  auto* fit = app.add_subcommand("fit", "run the regression (phase 1, 2 or all)");
  std::string f_phase = "all", f_flat, f_c7, f_freqs, f_grid, f_poly, f_zone = "11N",
              f_out, f_model;
  SamplerOpts f_sampler;
  fit->add_option("--phase", f_phase);
  fit->add_option("--flatfile", f_flat);
  fit->add_option("--c7", f_c7);
  fit->add_option("--freqs", f_freqs);
  fit->add_option("--grid", f_grid);
  fit->add_option("--polygons", f_poly);
  fit->add_option("--zone", f_zone);
  fit->add_option("--out", f_out);
  fit->add_option("--model", f_model);
  f_sampler.attach(fit);

  // smooth
  auto* smo = app.add_subcommand("smooth", "smooth phase-1 hyperparameters");
  std::string s_model;
  smo->add_option("--model", s_model)->required();

  // predict
  auto* pre = app.add_subcommand("predict", "scenario prediction from a bundle");
  std::string p_model, p_scn, p_freqs, p_out;
  pre->add_option("--model", p_model)->required();
  pre->add_option("--scenario", p_scn)->required();
  pre->add_option("--freqs", p_freqs);
  pre->add_option("--out", p_out)->required();

  // map
  auto* mp = app.add_subcommand("map", "coefficient map over a bounding box");
  std::string m_model, m_term = "dc1a", m_bbox, m_out;
  double m_freq = 5.0, m_res = 5.0;
  mp->add_option("--model", m_model)->required();
  mp->add_option("--term", m_term);
  mp->add_option("--freq", m_freq);
  mp->add_option("--bbox", m_bbox)->required();
  mp->add_option("--res-km", m_res);
  mp->add_option("--out", m_out)->required();

  // correlate
  auto* cor = app.add_subcommand("correlate", "fit inter-frequency correlations");
  std::string c_model, c_terms = "dc1e,dc1a,dc1b,cca", c_out;
  cor->add_option("--model", c_model)->required();
  cor->add_option("--terms", c_terms);
  cor->add_option("--out", c_out)->required();

  // sample-spectra
  auto* ss = app.add_subcommand("sample-spectra",
                                "correlated cross-frequency adjustment samples");
  std::string ss_model, ss_scn, ss_out;
  int ss_n = 10;
  ss->add_option("--model", ss_model)->required();
  ss->add_option("--scenario", ss_scn)->required();
  ss->add_option("--n", ss_n);
  ss->add_option("--out", ss_out)->required();

  // crossval
  auto* cv = app.add_subcommand("crossval", "earthquake-grouped k-fold validation");
  std::string cv_flat, cv_c7, cv_zone = "11N", cv_out = "report.json";
  int cv_k = 5, cv_p1w = 0, cv_p1d = 0;
  double cv_freq = 0.0;
  bool cv_zero = false;
  SamplerOpts cv_sampler;
  cv->add_option("--flatfile", cv_flat)->required();
  cv->add_option("--c7", cv_c7)->required();
  cv->add_option("--k", cv_k);
  cv->add_option("--freq", cv_freq);
  cv->add_option("--zone", cv_zone);
  cv->add_option("--out", cv_out);
  cv->add_flag("--zero-dc1e", cv_zero);
  cv->add_option("--phase1-warmup", cv_p1w);
  cv->add_option("--phase1-draws", cv_p1d);
  cv_sampler.attach(cv);

  // synth
  auto* sy = app.add_subcommand("synth", "generate a synthetic flatfile");
  std::string sy_spec, sy_out, sy_zone = "11N";
  sy->add_option("--spec", sy_spec)->required();
  sy->add_option("--out", sy_out)->required();
  sy->add_option("--zone", sy_zone);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*ing)
      return cmd_ingest(g, in_flat, in_c7, in_poly, in_grid, in_zone, in_out, in_skip);
    if (*fit)
      return cmd_fit(g, f_phase, f_flat, f_c7, f_freqs, f_grid, f_poly, f_zone, f_out,
                     f_model, f_sampler);
    if (*smo) return cmd_smooth(g, s_model);
    if (*pre) return cmd_predict(g, p_model, p_scn, p_freqs, p_out);
    if (*mp) return cmd_map(g, m_model, m_term, m_freq, m_bbox, m_res, m_out);
    if (*cor) return cmd_correlate(g, c_model, c_terms, c_out);
    if (*ss) return cmd_sample_spectra(g, ss_model, ss_scn, ss_n, ss_out);
    if (*cv)
      return cmd_crossval(g, cv_flat, cv_c7, cv_k, cv_freq, cv_zone, cv_out, cv_zero,
                          cv_sampler, cv_p1w, cv_p1d);
    if (*sy) return cmd_synth(g, sy_spec, sy_out, sy_zone);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
