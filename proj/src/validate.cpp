#include "negmm/validate.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "negmm/bundle.hpp"
#include "negmm/kernels.hpp"
#include "negmm/predict.hpp"
#include "negmm/stats.hpp"

namespace negmm {

FoldPlan make_folds(int n_events, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold cross-validation needs k >= 2");
  if (k > n_events)
    throw std::invalid_argument("more folds than events: k=" + std::to_string(k) +
                                ", events=" + std::to_string(n_events));
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::vector<int> order(n_events);
  for (int i = 0; i < n_events; ++i) order[i] = i;
  Rng rng = Rng::substream(seed, "folds");
  for (int i = n_events - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  plan.assignment.resize(n_events);
  for (int i = 0; i < n_events; ++i) plan.assignment[order[i]] = i % k;
  return plan;
}

namespace {

Eigen::VectorXd draw_gp(const std::vector<XY>& pts, double omega, double ell,
                        double jitter, Rng& rng) {
  const int n = static_cast<int>(pts.size());
  if (omega <= 0.0) return Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd corr = corr_matrix_exponential(ell, pts, jitter);
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("synthetic GP covariance not factorizable");
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  return omega * (Eigen::MatrixXd(llt.matrixL()) * z);
}

// Zero-truncated MVN(mu, K) by coordinatewise Gibbs sweeps from the
// precision-matrix conditionals.
Eigen::VectorXd draw_truncated_mvn(const Eigen::VectorXd& mu, const Eigen::MatrixXd& k,
                                   int sweeps, Rng& rng) {
  const int n = static_cast<int>(mu.size());
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("synthetic cell covariance not factorizable");
  const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c[i] = std::min(mu[i], -1e-6);
  for (int s = 0; s < sweeps; ++s) {
    for (int i = 0; i < n; ++i) {
      const double lam = prec(i, i);
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) dot += prec(i, j) * (c[j] - mu[j]);
      const double mean = mu[i] - dot / lam;
      const double sd = 1.0 / std::sqrt(lam);
      c[i] = truncated_normal_below(mean, sd, 0.0, rng);
    }
  }
  return c;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, SyntheticTruth* truth) {
  if (spec.n_events < 1 || spec.n_stations < 1)
    throw std::invalid_argument("synthetic spec needs positive counts");
  Dataset data;
  data.grid = spec.grid;
  if (data.grid.nx < 1 || data.grid.ny < 1) {
    // default region: 20x20 cells of 25 km placed over zone-11 California
    data.grid = CellGrid{XY{0.0, 3600.0}, 25.0, 25.0, 20, 20};
  }
  const double x0 = data.grid.origin.x + spec.margin_km;
  const double x1 = data.grid.origin.x + data.grid.nx * data.grid.dx - spec.margin_km;
  const double y0 = data.grid.origin.y + spec.margin_km;
  const double y1 = data.grid.origin.y + data.grid.ny * data.grid.dy - spec.margin_km;
  if (!(x1 > x0) || !(y1 > y0))
    throw std::invalid_argument("grid too small for the requested margin");

  Rng rng = Rng::substream(spec.seed, "synthetic");

  data.freqs = spec.freqs;
  data.c7 = spec.c7;
  if (data.c7.empty()) data.c7.assign(data.freqs.size(), -0.01);
  if (data.c7.size() != data.freqs.size())
    throw std::invalid_argument("c7 list must match frequency list");

  for (int e = 0; e < spec.n_events; ++e) {
    EventInfo ev;
    ev.id = "ev" + std::to_string(e);
    ev.xy = XY{x0 + rng.u01() * (x1 - x0), y0 + rng.u01() * (y1 - y0)};
    ev.mag = spec.mag_lo + rng.u01() * (spec.mag_hi - spec.mag_lo);
    ev.region = Region::none;
    data.events.push_back(ev);
  }
  for (int s = 0; s < spec.n_stations; ++s) {
    StationInfo st;
    st.id = "st" + std::to_string(s);
    st.xy = XY{x0 + rng.u01() * (x1 - x0), y0 + rng.u01() * (y1 - y0)};
    data.stations.push_back(st);
  }

  // records: each event is seen by its nearest stations
  data.segments = SegmentMatrix(data.grid.ncells());
  std::vector<double> depth(spec.n_events);
  for (int e = 0; e < spec.n_events; ++e)
    depth[e] = spec.depth_min_km + rng.u01() * (spec.depth_max_km - spec.depth_min_km);
  for (int e = 0; e < spec.n_events; ++e) {
    const int span = spec.max_stations_per_event - spec.min_stations_per_event;
    const int want = spec.min_stations_per_event + (span > 0 ? rng.uniform_int(span + 1) : 0);
    std::vector<int> idx(spec.n_stations);
    for (int s = 0; s < spec.n_stations; ++s) idx[s] = s;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return distance(data.stations[a].xy, data.events[e].xy) <
             distance(data.stations[b].xy, data.events[e].xy);
    });
    const int take = std::min(want, spec.n_stations);
    for (int t = 0; t < take; ++t) {
      Record rec;
      rec.event = e;
      rec.station = idx[t];
      rec.mag = data.events[e].mag;
      rec.vs30 = 200.0 + rng.u01() * 600.0;
      rec.cls_xy = data.events[e].xy;
      rec.cls_depth = depth[e];
      const Ray3 ray{rec.cls_xy, rec.cls_depth, data.stations[rec.station].xy, 0.0};
      rec.r_rup = ray.length();
      data.segments.add_row(segment_ray(data.grid, ray));
      data.records.push_back(rec);
    }
  }

  const int n = data.n_records();
  const int nf = static_cast<int>(data.freqs.size());
  data.residuals.resize(n, nf);

  if (truth) {
    truth->hyper = spec.hyper;
    truth->dc0 = spec.dc0;
    truth->dc0e_north = spec.dc0e_north;
    truth->dc0e_south = spec.dc0e_south;
    truth->phi0 = spec.phi0;
    truth->tau0 = spec.tau0;
  }

  const auto ev_xy = data.event_xy();
  const auto st_xy = data.station_xy();
  const auto mids = data.grid.midpoints();
  PriorConfig pc;

  for (int f = 0; f < nf; ++f) {
    const HyperParams& h = spec.hyper;
    const Eigen::VectorXd dc1e = draw_gp(ev_xy, h.omega_1e, h.ell_1e, pc.jitter_rel, rng);
    const Eigen::VectorXd dc1a = draw_gp(st_xy, h.omega_1as, h.ell_1as, pc.jitter_rel, rng);
    Eigen::VectorXd dc1b(spec.n_stations);
    for (int s = 0; s < spec.n_stations; ++s) dc1b[s] = h.omega_1bs * rng.normal();
    Eigen::VectorXd cca;
    if (h.omega_ca1 <= 0.0 && h.omega_ca2 <= 0.0) {
      cca = Eigen::VectorXd::Constant(data.grid.ncells(), data.c7[f]);
    } else {
      KernelSpec kc{KernelFamily::exponential_plus_nugget, h.omega_ca1, h.ell_ca1,
                    h.omega_ca2};
      const Eigen::MatrixXd k = cov_matrix(kc, mids, pc.jitter_rel);
      const Eigen::VectorXd mu = Eigen::VectorXd::Constant(data.grid.ncells(), data.c7[f]);
      cca = draw_truncated_mvn(mu, k, 120, rng);
    }
    Eigen::VectorXd dB(spec.n_events);
    for (int e = 0; e < spec.n_events; ++e) dB[e] = spec.tau0 * rng.normal();

    for (int r = 0; r < n; ++r) {
      const Record& rec = data.records[r];
      const EventInfo& ev = data.events[rec.event];
      double m = spec.dc0;
      switch (dc0e_selector(ev.mag, ev.region, data.freqs[f], pc)) {
        case Region::north: m += spec.dc0e_north; break;
        case Region::south: m += spec.dc0e_south; break;
        case Region::none: break;
      }
      m += dc1e[rec.event] + dc1a[rec.station] + dc1b[rec.station];
      const auto cells = data.segments.row_cells(r);
      const auto vals = data.segments.row_values(r);
      for (std::size_t kk = 0; kk < cells.size(); ++kk) m += cca[cells[kk]] * vals[kk];
      data.residuals(r, f) = m + dB[rec.event] + spec.phi0 * rng.normal();
    }

    if (truth) {
      truth->dc1e.push_back(dc1e);
      truth->dc1a.push_back(dc1a);
      truth->dc1b.push_back(dc1b);
      truth->c_ca.push_back(cca);
      truth->dB.push_back(dB);
    }
  }
  return data;
}

Dataset subset_for_fold(const Dataset& data, const FoldPlan& plan, int fold,
                        std::vector<int>* test_records) {
  if (static_cast<int>(plan.assignment.size()) != data.n_events())
    throw std::invalid_argument("fold plan does not match dataset");
  Dataset train;
  train.grid = data.grid;
  train.freqs = data.freqs;
  train.c7 = data.c7;
  train.segments = SegmentMatrix(data.grid.ncells());

  std::vector<int> event_map(data.n_events(), -1);
  std::vector<int> station_map(data.n_stations(), -1);
  std::vector<int> train_rows;
  if (test_records) test_records->clear();
  for (int r = 0; r < data.n_records(); ++r) {
    const Record& rec = data.records[r];
    if (plan.assignment[rec.event] == fold) {
      if (test_records) test_records->push_back(r);
      continue;
    }
    if (event_map[rec.event] < 0) {
      event_map[rec.event] = train.n_events();
      train.events.push_back(data.events[rec.event]);
    }
    if (station_map[rec.station] < 0) {
      station_map[rec.station] = train.n_stations();
      train.stations.push_back(data.stations[rec.station]);
    }
    Record copy = rec;
    copy.event = event_map[rec.event];
    copy.station = station_map[rec.station];
    train.records.push_back(copy);
    train_rows.push_back(r);
  }
  train.residuals.resize(train.n_records(), data.residuals.cols());
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    train.residuals.row(i) = data.residuals.row(train_rows[i]);
    const auto cells = data.segments.row_cells(train_rows[i]);
    const auto vals = data.segments.row_values(train_rows[i]);
    std::vector<Segment> segs(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) segs[k] = {cells[k], vals[k]};
    train.segments.add_row(segs);
  }
  return train;
}

CrossvalReport crossval(const Dataset& data, const HyperParams& pinned,
                        const CrossvalConfig& cfg) {
  CrossvalReport report;
  report.plan = make_folds(data.n_events(), cfg.k, cfg.seed);
  const double freq = data.freqs.at(cfg.freq_index);
  const double c7 = data.c7.at(cfg.freq_index);

  double sum_ne = 0.0, sum_erg = 0.0;
  int used = 0;
  for (int fold = 0; fold < cfg.k; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    std::vector<int> test;
    const Dataset train = subset_for_fold(data, report.plan, fold, &test);
    fr.n_test = static_cast<int>(test.size());
    if (train.n_records() == 0 || test.empty()) {
      fr.failed = true;
      fr.note = "empty train or test split";
      report.folds.push_back(fr);
      ++report.n_failed;
      continue;
    }
    try {
      SamplerConfig scfg = cfg.sampler;
      scfg.seed = cfg.sampler.seed + 977 * fold;
      PosteriorSummary fit =
          fit_frequency(train, cfg.freq_index, Phase::two, scfg, cfg.priors, &pinned);
      if (!fit.converged) {
        fr.failed = true;
        fr.note = "fold fit not converged";
        report.folds.push_back(fr);
        ++report.n_failed;
        continue;
      }
      const FrequencyFit ff = make_frequency_fit(train, fit, pinned, c7);
      double se_ne = 0.0, se_erg = 0.0;
      for (int r : test) {
        const Record& rec = data.records[r];
        ScenarioRequest req;
        req.eq_xy = data.events[rec.event].xy;
        req.sta_xy = data.stations[rec.station].xy;
        req.cls_xy = rec.cls_xy;
        req.cls_depth = rec.cls_depth;
        req.mag = rec.mag;
        req.freq = freq;
        req.station_id = data.stations[rec.station].id;
        req.region = data.events[rec.event].region;
        ScenarioPrediction pred = predict_scenario(req, ff, data.grid, cfg.priors);
        double med = pred.median;
        if (cfg.zero_dc1e) med -= pred.dc1e_mean;
        const double y = data.residuals(r, cfg.freq_index);
        se_ne += (y - med) * (y - med);
        const double raw = y - c7 * rec.r_rup;  // ergodic residual
        se_erg += raw * raw;
      }
      fr.rmse_nonergodic = std::sqrt(se_ne / test.size());
      fr.rmse_ergodic = std::sqrt(se_erg / test.size());
      sum_ne += fr.rmse_nonergodic;
      sum_erg += fr.rmse_ergodic;
      ++used;
    } catch (const std::exception& e) {
      fr.failed = true;
      fr.note = e.what();
      ++report.n_failed;
    }
    report.folds.push_back(fr);
  }
  report.avg_nonergodic = used > 0 ? sum_ne / used : 0.0;
  report.avg_ergodic = used > 0 ? sum_erg / used : 0.0;
  return report;
}

}  // namespace negmm
