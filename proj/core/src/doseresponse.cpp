#include "waterscreen/doseresponse.hpp"

#include <algorithm>
#include <cmath>

#include "waterscreen/csv.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/modelspec.hpp"
#include "waterscreen/screening.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

namespace {

Eigen::MatrixXd ones_complement(int nb) {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(nb, 1);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(nb, nb);
    return Q.rightCols(nb - 1);
}

} // namespace

GamFit fit_pspline(const Eigen::VectorXd& y, const std::vector<double>& exposure,
                   const Eigen::MatrixXd& covariates, const Eigen::VectorXd& offset,
                   const std::vector<int>& fe_a, const std::vector<int>& fe_b, double lambda,
                   const GamConfig& cfg) {
    const Eigen::Index n = y.size();
    if (n < 3) throw ValidationError("penalized spline needs at least 3 rows");
    if (static_cast<Eigen::Index>(exposure.size()) != n)
        throw ValidationError("exposure length mismatch");
    if (covariates.rows() != 0 && covariates.rows() != n)
        throw ValidationError("covariate row count mismatch");
    if (offset.size() != 0 && offset.size() != n) throw ValidationError("offset length mismatch");
    if (!fe_a.empty() && static_cast<Eigen::Index>(fe_a.size()) != n)
        throw ValidationError("factor length mismatch");
    if (!fe_b.empty() && static_cast<Eigen::Index>(fe_b.size()) != n)
        throw ValidationError("factor length mismatch");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(y[i] >= 0.0)) throw ValidationError("outcome must be nonnegative");
        if (std::isnan(exposure[static_cast<std::size_t>(i)]))
            throw ValidationError("exposure contains missing values");
    }

    GamFit fit;
    fit.basis = BsplineBasis::from_quantiles(exposure, cfg.k_interior, cfg.degree);
    fit.lambda = lambda;
    fit.n_obs = static_cast<int>(n);
    fit.fe_absorbed = !fe_a.empty() || !fe_b.empty();

    const int nb = fit.basis.n_basis();
    Eigen::MatrixXd B = fit.basis.evaluate(exposure);
    Eigen::MatrixXd D = second_divided_difference_matrix(fit.basis.greville());
    Eigen::MatrixXd P = D.transpose() * D;

    // With fixed effects the constant spline direction is absorbed; the
    // solve happens in the orthogonal complement of the ones vector.
    Eigen::MatrixXd Z;
    Eigen::MatrixXd Bz;
    Eigen::MatrixXd Pz;
    if (fit.fe_absorbed) {
        Z = ones_complement(nb);
        Bz = B * Z;
        Pz = Z.transpose() * P * Z;
    } else {
        Bz = B;
        Pz = P;
    }
    // Covariate columns with no variation left after absorption (or none
    // around their mean when the basis spans the constant) would make the
    // penalized system singular at every lambda; drop them the way the
    // screening fit does.
    Eigen::MatrixXd X(n, covariates.cols());
    {
        Eigen::Index kept = 0;
        Eigen::MatrixXd probe;
        if (fit.fe_absorbed && covariates.cols() > 0) {
            probe = covariates;
            demean(probe, fe_a, fe_b, Eigen::VectorXd::Ones(n), cfg.demean);
        }
        for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
            double within =
                fit.fe_absorbed
                    ? probe.col(j).norm()
                    : (covariates.col(j).array() - covariates.col(j).mean()).matrix().norm();
            if (within / (covariates.col(j).norm() + 1.0) < 1e-8) continue;
            X.col(kept++) = covariates.col(j);
            fit.covariate_kept.push_back(static_cast<int>(j));
        }
        X.conservativeResize(n, kept);
    }

    const Eigen::Index ps = Bz.cols();
    const Eigen::Index pc = X.cols();
    const Eigen::Index p = ps + pc;

    Eigen::MatrixXd M(n, p);
    M.leftCols(ps) = Bz;
    if (pc > 0) M.rightCols(pc) = X;

    Eigen::MatrixXd Pen = Eigen::MatrixXd::Zero(p, p);
    Pen.topLeftCorner(ps, ps) = lambda * Pz;

    Eigen::VectorXd off = offset.size() ? offset : Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ones_w = Eigen::VectorXd::Ones(n);

    Eigen::VectorXd mu = y.array() + 0.5;
    Eigen::VectorXd eta = mu.array().log();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
    double pen_dev = poisson_deviance(y, mu, ones_w) +
                     theta.head(ps).dot(lambda * (Pz * theta.head(ps)));
    int step_no = 0;

    auto one_step = [&](bool count_iteration) {
        ++step_no;
        Eigen::VectorXd w = mu;
        Eigen::VectorXd z = (eta - off) + (y - mu).cwiseQuotient(mu);
        Eigen::MatrixXd ZM(n, 1 + p);
        ZM.col(0) = z;
        ZM.rightCols(p) = M;
        if (fit.fe_absorbed) demean(ZM, fe_a, fe_b, w, cfg.demean);
        Eigen::VectorXd zt = ZM.col(0);
        Eigen::MatrixXd Mt = ZM.rightCols(p);

        Eigen::MatrixXd G = Mt.transpose() * w.asDiagonal() * Mt + Pen;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success)
            throw NumericError("penalized system is numerically singular");
        Eigen::VectorXd dvec = ldlt.vectorD();
        double dmax = dvec.cwiseAbs().maxCoeff();
        if (!(dmax > 0.0) || dvec.cwiseAbs().minCoeff() < 1e-13 * dmax ||
            dvec.minCoeff() < -1e-8 * dmax)
            throw NumericError("penalized system is numerically singular");
        Eigen::VectorXd theta_new = ldlt.solve(Mt.transpose() * (w.asDiagonal() * zt));

        Eigen::VectorXd eta_full = off + (z - zt) + Mt * theta_new;
        // The saturated start sits below any penalized optimum, so the first
        // step is accepted on finiteness alone; monotonicity is enforced once
        // eta lies in the model space.
        const bool monotone = step_no > 1;
        double scale = 1.0;
        Eigen::VectorXd theta_try, eta_try, mu_try;
        double pen_try = 0.0;
        int half = 0;
        for (; half < 30; ++half) {
            theta_try = theta + scale * (theta_new - theta);
            eta_try = eta + scale * (eta_full - eta);
            if (eta_try.maxCoeff() < 700.0) {
                mu_try = eta_try.array().exp();
                pen_try = poisson_deviance(y, mu_try, ones_w) +
                          theta_try.head(ps).dot(lambda * (Pz * theta_try.head(ps)));
                if (std::isfinite(pen_try) &&
                    (!monotone || pen_try <= pen_dev + 1e-8 * (std::abs(pen_dev) + 1.0)))
                    break;
            }
            scale *= 0.5;
        }
        if (half == 30)
            throw NumericError("penalized IRLS step halving failed (possible separation)");

        double change = std::abs(pen_dev - pen_try) / (std::abs(pen_try) + 0.1);
        theta = theta_try;
        eta = eta_try;
        mu = mu_try;
        pen_dev = pen_try;
        if (count_iteration) ++fit.iterations;
        return change;
    };

    bool done = false;
    for (int it = 0; it < cfg.max_iter && !done; ++it)
        done = one_step(true) < cfg.tol;
    if (!done) throw NumericError("penalized IRLS did not converge");
    fit.converged = true;
    // Two full Newton steps tighten the score to machine scale so the
    // gradient check downstream is meaningful.
    one_step(false);
    one_step(false);

    // Final-weight quantities for edf and the reported deviance.
    {
        Eigen::VectorXd w = mu;
        Eigen::VectorXd z = (eta - off) + (y - mu).cwiseQuotient(mu);
        Eigen::MatrixXd ZM(n, 1 + p);
        ZM.col(0) = z;
        ZM.rightCols(p) = M;
        if (fit.fe_absorbed) demean(ZM, fe_a, fe_b, w, cfg.demean);
        Eigen::MatrixXd Mt = ZM.rightCols(p);
        Eigen::MatrixXd XtWX = Mt.transpose() * w.asDiagonal() * Mt;
        Eigen::MatrixXd G = XtWX + Pen;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success)
            throw NumericError("penalized system is numerically singular");
        fit.edf = ldlt.solve(XtWX).trace();
    }

    fit.deviance = poisson_deviance(y, mu, ones_w);
    fit.penalized_deviance = pen_dev;
    double denom = static_cast<double>(n) - fit.edf;
    fit.gcv = denom > 0.0 ? static_cast<double>(n) * fit.deviance / (denom * denom)
                          : std::numeric_limits<double>::infinity();

    if (fit.fe_absorbed)
        fit.coef = Z * theta.head(ps);
    else
        fit.coef = theta.head(ps);
    fit.covariate_coef = theta.tail(pc);

    if (fit.fe_absorbed) {
        // Partition of unity makes a constant shift exactly representable as
        // a uniform coefficient offset.
        double shift = (B * fit.coef).mean();
        fit.coef.array() -= shift;
        fit.level_shift = shift;
    }
    return fit;
}

double select_lambda(const Eigen::VectorXd& y, const std::vector<double>& exposure,
                     const Eigen::MatrixXd& covariates, const Eigen::VectorXd& offset,
                     const std::vector<int>& fe_a, const std::vector<int>& fe_b,
                     const GamConfig& cfg, std::vector<double>* gcv_path,
                     bool* endpoint_selected) {
    std::vector<double> grid = cfg.lambda_grid;
    if (grid.empty()) {
        for (int i = 0; i < 40; ++i)
            grid.push_back(std::pow(10.0, -4.0 + 12.0 * static_cast<double>(i) / 39.0));
    }
    if (gcv_path) gcv_path->assign(grid.size(), std::numeric_limits<double>::quiet_NaN());

    double best_lambda = -1.0;
    double best_gcv = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double g;
        try {
            GamFit f = fit_pspline(y, exposure, covariates, offset, fe_a, fe_b, grid[i], cfg);
            g = f.gcv;
        } catch (const NumericError&) {
            continue;
        }
        if (gcv_path) (*gcv_path)[i] = g;
        if (g < best_gcv) {
            best_gcv = g;
            best_lambda = grid[i];
            best_idx = i;
        }
    }
    if (best_lambda < 0.0)
        throw NumericError("no smoothing parameter on the grid produced a usable fit");
    if (endpoint_selected) *endpoint_selected = best_idx == 0 || best_idx + 1 == grid.size();
    return best_lambda;
}

std::vector<double> spline_curve(const GamFit& fit, const std::vector<double>& grid) {
    Eigen::VectorXd f = fit.basis.evaluate(grid) * fit.coef;
    return std::vector<double>(f.data(), f.data() + f.size());
}

std::vector<double> derivative_curve(const GamFit& fit, const std::vector<double>& grid) {
    Eigen::VectorXd f = fit.basis.evaluate(grid) * fit.coef;
    Eigen::VectorXd df = fit.basis.derivative(grid) * fit.coef;
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        out[i] = std::exp(f[static_cast<Eigen::Index>(i)]) * df[static_cast<Eigen::Index>(i)];
    return out;
}

DoseResponseCurve run_doseresponse(const ZipYearPanel& panel, const std::string& analyte,
                                   const GamConfig& cfg) {
    int col = panel.analyte_index(analyte);
    if (col < 0) throw ValidationError("unknown analyte: " + analyte);
    if (!panel.analyte_info[col].kept)
        throw ValidationError("analyte '" + analyte + "' was dropped during panel preparation");

    std::vector<std::size_t> rows = analyte_rows(panel, col);
    const std::size_t n = rows.size();
    if (n < 10) throw ValidationError("too few rows for a dose-response fit");

    DoseResponseCurve out;
    out.analyte = analyte;
    out.chem_class = panel.analyte_info[col].chem_class;
    out.exposure.resize(n);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        out.exposure[i] = panel.analytes(static_cast<Eigen::Index>(rows[i]), col);
        y[static_cast<Eigen::Index>(i)] = static_cast<double>(panel.deaths[rows[i]]);
    }
    std::vector<std::string> cov_names;
    Eigen::MatrixXd covariates = primary_covariates(panel, rows, &cov_names);
    RegressionSpec frame;
    fill_primary_frame(panel, rows, frame);

    double lambda = cfg.lambda;
    bool endpoint = false;
    if (lambda < 0.0)
        lambda = select_lambda(y, out.exposure, covariates, frame.offset, frame.fe_a, frame.fe_b,
                               cfg, nullptr, &endpoint);
    out.fit = fit_pspline(y, out.exposure, covariates, frame.offset, frame.fe_a, frame.fe_b,
                          lambda, cfg);
    out.fit.endpoint_selected = endpoint;
    for (int j : out.fit.covariate_kept)
        out.fit.covariate_names.push_back(cov_names[static_cast<std::size_t>(j)]);

    double lo = out.fit.basis.lo();
    double hi = out.fit.basis.hi();
    const int g = std::max(cfg.grid_points, 2);
    out.grid.resize(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i)
        out.grid[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(g - 1);
    out.link = spline_curve(out.fit, out.grid);
    out.response.resize(out.link.size());
    for (std::size_t i = 0; i < out.link.size(); ++i) out.response[i] = std::exp(out.link[i]);
    out.deriv = derivative_curve(out.fit, out.grid);
    out.p99 = quantile_type7(out.exposure, 0.99);
    return out;
}

void write_doseresponse(const std::string& path, const DoseResponseCurve& curve) {
    CsvWriter w(path);
    w.write_row({"grid", "fitted_link", "fitted_response", "derivative", "within_p99"});
    for (std::size_t i = 0; i < curve.grid.size(); ++i)
        w.write_row({CsvWriter::format_double(curve.grid[i]),
                     CsvWriter::format_double(curve.link[i]),
                     CsvWriter::format_double(curve.response[i]),
                     CsvWriter::format_double(curve.deriv[i]),
                     curve.grid[i] <= curve.p99 ? "1" : "0"});
    w.close();
}

void write_density(const std::string& path, const DoseResponseCurve& curve, int bins) {
    if (bins < 1) throw ConfigError("density needs at least 1 bin");
    double lo = curve.fit.basis.lo();
    double hi = curve.fit.basis.hi();
    double width = (hi - lo) / static_cast<double>(bins);
    std::vector<long long> count(static_cast<std::size_t>(bins), 0);
    for (double v : curve.exposure) {
        int b = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
        b = std::clamp(b, 0, bins - 1);
        ++count[static_cast<std::size_t>(b)];
    }
    const double total = static_cast<double>(curve.exposure.size());
    CsvWriter w(path);
    w.write_row({"bin_lo", "bin_hi", "count", "density", "within_p99"});
    for (int b = 0; b < bins; ++b) {
        double blo = lo + width * static_cast<double>(b);
        double bhi = b + 1 == bins ? hi : blo + width;
        double mid = 0.5 * (blo + bhi);
        double dens = width > 0.0 ? static_cast<double>(count[static_cast<std::size_t>(b)]) /
                                        (total * width)
                                  : 0.0;
        w.write_row({CsvWriter::format_double(blo), CsvWriter::format_double(bhi),
                     CsvWriter::format_int(count[static_cast<std::size_t>(b)]),
                     CsvWriter::format_double(dens), mid <= curve.p99 ? "1" : "0"});
    }
    w.close();
}

} // namespace waterscreen
