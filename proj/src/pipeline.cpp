#include "negmm/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace negmm {

using nlohmann::json;

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j = json::parse(text);

  PipelineConfig cfg;
  cfg.canonical_text = text;
  cfg.flatfile = j.at("flatfile").get<std::string>();
  cfg.c7_sidecar = j.at("c7").get<std::string>();
  if (j.contains("polygons")) cfg.polygons_path = j.at("polygons").get<std::string>();
  if (j.contains("grid")) cfg.grid_path = j.at("grid").get<std::string>();
  cfg.out_dir = j.at("out_dir").get<std::string>();
  cfg.zone = j.value("zone", cfg.zone);
  if (j.contains("freqs")) cfg.freqs = j.at("freqs").get<std::vector<double>>();
  if (j.contains("phase1_freqs"))
    cfg.phase1_freqs = j.at("phase1_freqs").get<std::vector<double>>();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.write_draws = j.value("write_draws", cfg.write_draws);
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    cfg.sampler.chains = s.value("chains", cfg.sampler.chains);
    cfg.sampler.warmup = s.value("warmup", cfg.sampler.warmup);
    cfg.sampler.draws = s.value("draws", cfg.sampler.draws);
    cfg.sampler.target_accept = s.value("target_accept", cfg.sampler.target_accept);
    cfg.sampler.max_tree_depth = s.value("max_tree_depth", cfg.sampler.max_tree_depth);
  }
  if (j.contains("priors")) {
    const json& p = j.at("priors");
    PriorConfig& pc = cfg.priors;
    pc.dc0_sd = p.value("dc0_sd", pc.dc0_sd);
    pc.dc0e_sd = p.value("dc0e_sd", pc.dc0e_sd);
    pc.ell_invgamma_alpha = p.value("ell_invgamma_alpha", pc.ell_invgamma_alpha);
    pc.ell_invgamma_beta = p.value("ell_invgamma_beta", pc.ell_invgamma_beta);
    pc.omega_exp_rate = p.value("omega_exp_rate", pc.omega_exp_rate);
    pc.omega1b_ln_mu = p.value("omega1b_ln_mu", pc.omega1b_ln_mu);
    pc.omega1b_ln_sd = p.value("omega1b_ln_sd", pc.omega1b_ln_sd);
    pc.phi0_ln_mu = p.value("phi0_ln_mu", pc.phi0_ln_mu);
    pc.phi0_ln_sd = p.value("phi0_ln_sd", pc.phi0_ln_sd);
    pc.tau0_ln_mu = p.value("tau0_ln_mu", pc.tau0_ln_mu);
    pc.tau0_ln_sd = p.value("tau0_ln_sd", pc.tau0_ln_sd);
    pc.mask_mag_max = p.value("mask_mag_max", pc.mask_mag_max);
    pc.mask_freq_max = p.value("mask_freq_max", pc.mask_freq_max);
    pc.jitter_rel = p.value("jitter_rel", pc.jitter_rel);
  }
  if (j.contains("smoothing")) {
    const json& s = j.at("smoothing");
    if (s.contains("omega1a_knots_hz"))
      cfg.smoothing.omega1a_knots_hz =
          s.at("omega1a_knots_hz").get<std::vector<double>>();
    cfg.smoothing.omega1a_break_hz =
        s.value("omega1a_break_hz", cfg.smoothing.omega1a_break_hz);
    cfg.smoothing.ell_ca_cap_km = s.value("ell_ca_cap_km", cfg.smoothing.ell_ca_cap_km);
    cfg.smoothing.median_window = s.value("median_window", cfg.smoothing.median_window);
  }
  return cfg;
}

void PipelineConfig::validate() const {
  if (flatfile.empty() || c7_sidecar.empty() || out_dir.empty())
    throw std::invalid_argument("config needs flatfile, c7 and out_dir");
  sampler.validate();
  for (std::size_t i = 1; i < freqs.size(); ++i)
    if (!(freqs[i] > freqs[i - 1]))
      throw std::invalid_argument("frequency list must be positive and sorted");
  if (!freqs.empty() && !(freqs.front() > 0.0))
    throw std::invalid_argument("frequencies must be positive");
}

AleatoryModel extract_aleatory(const Dataset& data,
                               std::span<const PosteriorSummary> phase2,
                               const PriorConfig& pc, double mag_lo, double mag_hi) {
  std::vector<double> freqs, tau0, m1, m2;
  for (const PosteriorSummary& s : phase2) {
    const int fi = data.freq_index(s.freq);
    ModelParams p;
    p.dc0 = s.means[0];
    p.dc0e_north = s.means[1];
    p.dc0e_south = s.means[2];
    p.dc1e = s.means.segment(s.off_dc1e(), s.n_events);
    p.dc1a = s.means.segment(s.off_dc1a(), s.n_stations);
    p.dc1b = s.means.segment(s.off_dc1b(), s.n_stations);
    p.c_ca = s.means.segment(s.off_cca(), s.n_cells);
    p.dB = s.means.segment(s.off_dB(), s.n_events);
    p.phi0 = s.mean_of("phi0");
    p.tau0 = s.mean_of("tau0");

    double ss_lo = 0.0, ss_hi = 0.0;
    int n_lo = 0, n_hi = 0;
    for (int r = 0; r < data.n_records(); ++r) {
      const double eps = data.residuals(r, fi) -
                         median_nonergodic(data, r, p, s.freq, pc) -
                         p.dB[data.records[r].event];
      if (data.records[r].mag < mag_lo) {
        ss_lo += eps * eps;
        ++n_lo;
      } else if (data.records[r].mag > mag_hi) {
        ss_hi += eps * eps;
        ++n_hi;
      }
    }
    freqs.push_back(s.freq);
    tau0.push_back(p.tau0);
    m1.push_back(n_lo >= 5 ? std::sqrt(ss_lo / n_lo) : p.phi0);
    m2.push_back(n_hi >= 5 ? std::sqrt(ss_hi / n_hi) : p.phi0);
  }
  return smooth_aleatory(freqs, tau0, m1, m2, mag_lo, mag_hi);
}

EmpiricalCorr empirical_corr_from_fits(std::span<const PosteriorSummary> fits,
                                       const std::string& term_prefix, int offset,
                                       int count) {
  (void)term_prefix;
  EmpiricalCorr emp;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    for (std::size_t j = i + 1; j < fits.size(); ++j) {
      const Eigen::VectorXd xi = fits[i].means.segment(offset, count);
      const Eigen::VectorXd xj = fits[j].means.segment(offset, count);
      double rho;
      try {
        rho = empirical_rho(std::span<const double>(xi.data(), count),
                            std::span<const double>(xj.data(), count));
      } catch (const std::exception&) {
        continue;  // degenerate block at this pair
      }
      if (!(std::abs(rho) < 1.0)) continue;
      EmpiricalCorr::Point pt;
      pt.f1 = fits[i].freq;
      pt.f2 = fits[j].freq;
      pt.rho = rho;
      pt.n = count;
      const auto [z, sz] = fisher_z(rho, std::max(count, 4));
      pt.z = z;
      pt.sigma_z = sz;
      emp.points.push_back(pt);
    }
  }
  return emp;
}

ModelBundle run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();

  IngestOptions iopt;
  iopt.zone = UtmZone::parse(cfg.zone);
  if (cfg.polygons_path) iopt.polygons = load_region_polygons(*cfg.polygons_path);
  if (cfg.grid_path) iopt.grid = load_grid_json(*cfg.grid_path);
  if (!cfg.freqs.empty()) iopt.freqs = cfg.freqs;

  IngestReport rep;
  log << "[ingest] " << cfg.flatfile.string() << "\n";
  Dataset data = ingest_flatfile(cfg.flatfile, cfg.c7_sidecar, iopt, &rep);
  log << "[ingest] records=" << rep.records << " events=" << rep.events
      << " stations=" << rep.stations << " cells_crossed=" << rep.cells_crossed
      << " rejected=" << rep.rejected << "\n";
  for (const auto& w : rep.warnings) log << "[ingest] warning: " << w << "\n";
  if (data.n_records() == 0) throw std::invalid_argument("no usable records ingested");

  SamplerConfig scfg = cfg.sampler;
  scfg.seed = cfg.seed;
  scfg.workers = cfg.workers;

  // phase-1 subset: every other frequency unless given
  std::vector<int> p1idx;
  if (!cfg.phase1_freqs.empty()) {
    for (double f : cfg.phase1_freqs) p1idx.push_back(data.freq_index(f));
  } else {
    for (std::size_t i = 0; i < data.freqs.size(); i += 2)
      p1idx.push_back(static_cast<int>(i));
  }

  log << "[phase1] fitting " << p1idx.size() << " frequencies\n";
  std::vector<PosteriorSummary> phase1 = fit_phase1(data, p1idx, scfg, cfg.priors);
  for (const auto& s : phase1)
    log << "[phase1] f=" << s.freq << " Hz converged=" << (s.converged ? "yes" : "no")
        << " divergences=" << s.divergences << "\n";

  SmoothedHyper smoothed;
  if (phase1.size() >= 3) {
    smoothed = smooth_hyperparameters(phase1, cfg.smoothing);
  } else {
    // too few frequencies for the smoothing rules: pin each fitted frequency
    // to its own posterior means
    log << "[smooth] fewer than 3 phase-1 frequencies; using per-frequency means\n";
    smoothed.freqs.clear();
    for (const auto& s : phase1) {
      smoothed.freqs.push_back(s.freq);
      smoothed.ell_1e.push_back(s.mean_of("ell_1e"));
      smoothed.omega_1e.push_back(s.mean_of("omega_1e"));
      smoothed.ell_1as.push_back(s.mean_of("ell_1as"));
      smoothed.omega_1as.push_back(s.mean_of("omega_1as"));
      smoothed.omega_1bs.push_back(s.mean_of("omega_1bs"));
      smoothed.ell_ca1.push_back(s.mean_of("ell_ca1"));
      smoothed.omega_ca1.push_back(s.mean_of("omega_ca1"));
      smoothed.omega_ca2.push_back(s.mean_of("omega_ca2"));
    }
    smoothed.warnings.push_back("smoothing bypassed: fewer than 3 frequencies");
  }
  for (const auto& w : smoothed.warnings) log << "[smooth] warning: " << w << "\n";

  std::vector<int> all_idx(data.freqs.size());
  for (std::size_t i = 0; i < data.freqs.size(); ++i) all_idx[i] = static_cast<int>(i);
  log << "[phase2] fitting " << all_idx.size() << " frequencies\n";
  std::vector<PosteriorSummary> phase2 =
      fit_phase2(data, all_idx, smoothed, scfg, cfg.priors);
  for (const auto& s : phase2)
    log << "[phase2] f=" << s.freq << " Hz converged=" << (s.converged ? "yes" : "no")
        << " divergences=" << s.divergences << "\n";

  ModelBundle bundle;
  bundle.config_hash = config_hash_hex(cfg.canonical_text.empty()
                                           ? "seed=" + std::to_string(cfg.seed)
                                           : cfg.canonical_text);
  bundle.seed = cfg.seed;
  bundle.zone = iopt.zone;
  bundle.priors = cfg.priors;
  bundle.grid = data.grid;
  bundle.polygons = iopt.polygons.empty() ? default_region_polygons() : iopt.polygons;
  bundle.freqs = data.freqs;
  bundle.c7 = data.c7;
  bundle.phase1_freq_indices = p1idx;
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
  bundle.smoothed = smoothed;
  bundle.phase1 = std::move(phase1);
  bundle.phase2 = std::move(phase2);
  if (!cfg.write_draws) {
    for (auto& s : bundle.phase1) s.draws.resize(0, 0);
    for (auto& s : bundle.phase2) s.draws.resize(0, 0);
  }

  if (data.freqs.size() >= 5) {
    log << "[aleatory] extracting magnitude-dependent sds\n";
    bundle.aleatory = extract_aleatory(data, bundle.phase2, cfg.priors);
    bundle.has_aleatory = true;
    for (const auto& w : bundle.aleatory.warnings)
      log << "[aleatory] warning: " << w << "\n";
  } else {
    log << "[aleatory] skipped: needs >= 5 frequencies\n";
  }

  if (data.freqs.size() >= 5) {
    const PosteriorSummary& ref = bundle.phase2.front();
    struct TermDef {
      const char* name;
      int offset, count;
    };
    const TermDef terms[] = {
        {"dc1e", ref.off_dc1e(), ref.n_events},
        {"dc1a", ref.off_dc1a(), ref.n_stations},
        {"dc1b", ref.off_dc1b(), ref.n_stations},
        {"cca", ref.off_cca(), ref.n_cells},
    };
    for (const auto& t : terms) {
      try {
        const EmpiricalCorr emp =
            empirical_corr_from_fits(bundle.phase2, t.name, t.offset, t.count);
        bundle.correlations[t.name] = fit_correlation_model(emp).model;
        log << "[correlate] " << t.name << " fitted\n";
      } catch (const std::exception& e) {
        log << "[correlate] " << t.name << " skipped: " << e.what() << "\n";
      }
    }
  } else {
    log << "[correlate] skipped: needs >= 5 frequencies\n";
  }

  bundle.save(cfg.out_dir);
  log << "[bundle] written to " << cfg.out_dir.string() << "\n";
  return bundle;
}

}  // namespace negmm
