#include "waterscreen/feglm.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "waterscreen/errors.hpp"
#include "waterscreen/stats.hpp"

namespace waterscreen {

namespace {

int level_count(const std::vector<int>& f) {
    int m = -1;
    for (int v : f) m = std::max(m, v);
    return m + 1;
}

// Weighted level means of every column for one factor, subtracted in place.
// Returns the largest absolute mean removed (the sweep's sup-norm change up
// to a factor of the number of factors).
double project_out(Eigen::MatrixXd& cols, const std::vector<int>& f,
                   const std::vector<double>& level_wsum, const Eigen::VectorXd& w,
                   std::vector<double>& scratch) {
    const Eigen::Index n = cols.rows();
    const std::size_t L = level_wsum.size();
    double delta = 0.0;
    for (Eigen::Index j = 0; j < cols.cols(); ++j) {
        double* c = cols.col(j).data();
        std::fill(scratch.begin(), scratch.begin() + L, 0.0);
        for (Eigen::Index i = 0; i < n; ++i) scratch[f[i]] += w(i) * c[i];
        for (std::size_t l = 0; l < L; ++l) {
            scratch[l] = level_wsum[l] > 0.0 ? scratch[l] / level_wsum[l] : 0.0;
            delta = std::max(delta, std::fabs(scratch[l]));
        }
        for (Eigen::Index i = 0; i < n; ++i) c[i] -= scratch[f[i]];
    }
    return delta;
}

double residual_group_mean(const Eigen::MatrixXd& cols, const std::vector<int>& f,
                           const std::vector<double>& level_wsum, const Eigen::VectorXd& w,
                           std::vector<double>& scratch) {
    const Eigen::Index n = cols.rows();
    const std::size_t L = level_wsum.size();
    double worst = 0.0;
    for (Eigen::Index j = 0; j < cols.cols(); ++j) {
        const double* c = cols.col(j).data();
        std::fill(scratch.begin(), scratch.begin() + L, 0.0);
        for (Eigen::Index i = 0; i < n; ++i) scratch[f[i]] += w(i) * c[i];
        for (std::size_t l = 0; l < L; ++l)
            if (level_wsum[l] > 0.0) worst = std::max(worst, std::fabs(scratch[l] / level_wsum[l]));
    }
    return worst;
}

std::vector<double> level_weight_sums(const std::vector<int>& f, const Eigen::VectorXd& w) {
    std::vector<double> s(level_count(f), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) s[f[i]] += w(i);
    return s;
}

Eigen::VectorXd solve_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& rhs,
                           Eigen::MatrixXd* inverse_out = nullptr) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    Eigen::VectorXd d = ldlt.vectorD();
    double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(dmax > 0.0) ||
        d.cwiseAbs().minCoeff() <= 1e-12 * dmax || d.minCoeff() < -1e-8 * dmax) {
        throw NumericError("design matrix is singular after demeaning (perfectly collinear regressors)");
    }
    if (inverse_out)
        *inverse_out = ldlt.solve(Eigen::MatrixXd::Identity(G.rows(), G.cols()));
    return ldlt.solve(rhs);
}

std::vector<int> recode(const std::vector<int>& codes) {
    std::set<int> uniq(codes.begin(), codes.end());
    std::map<int, int> to_compact;
    int next = 0;
    for (int c : uniq) to_compact[c] = next++;
    std::vector<int> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) out[i] = to_compact[codes[i]];
    return out;
}

} // namespace

int demean(Eigen::MatrixXd& cols, const std::vector<int>& factor_a,
           const std::vector<int>& factor_b, const Eigen::VectorXd& weights,
           const DemeanOptions& opt) {
    const Eigen::Index n = cols.rows();
    if (cols.cols() == 0 || n == 0) return 0;
    if (weights.size() != n) throw InternalError("demean: weight length mismatch");
    const bool has_a = !factor_a.empty();
    const bool has_b = !factor_b.empty();
    if ((has_a && static_cast<Eigen::Index>(factor_a.size()) != n) ||
        (has_b && static_cast<Eigen::Index>(factor_b.size()) != n))
        throw InternalError("demean: factor length mismatch");
    if (!has_a && !has_b) return 0;

    std::vector<double> wsum_a, wsum_b;
    std::size_t max_levels = 0;
    if (has_a) {
        wsum_a = level_weight_sums(factor_a, weights);
        max_levels = std::max(max_levels, wsum_a.size());
    }
    if (has_b) {
        wsum_b = level_weight_sums(factor_b, weights);
        max_levels = std::max(max_levels, wsum_b.size());
    }
    std::vector<double> scratch(max_levels);

    double delta = std::numeric_limits<double>::infinity();
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        delta = 0.0;
        if (has_a) delta = std::max(delta, project_out(cols, factor_a, wsum_a, weights, scratch));
        if (has_b) delta = std::max(delta, project_out(cols, factor_b, wsum_b, weights, scratch));
        if (delta < opt.tol) {
            double resid = 0.0;
            if (has_a) resid = std::max(resid, residual_group_mean(cols, factor_a, wsum_a, weights, scratch));
            if (has_b) resid = std::max(resid, residual_group_mean(cols, factor_b, wsum_b, weights, scratch));
            if (resid < opt.residual_tol) return sweep;
            // Rare: per-sweep change converged but residual means are still
            // too fat; keep projecting until they pass or sweeps run out.
        }
    }
    throw NumericError("alternating-projections demeaning did not converge in " +
                       std::to_string(opt.max_sweeps) +
                       " sweeps; last sweep delta = " + std::to_string(delta));
}

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                        const Eigen::VectorXd& prior_weights) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double t = y(i) > 0.0 ? y(i) * std::log(y(i) / mu(i)) - (y(i) - mu(i)) : mu(i);
        dev += prior_weights(i) * t;
    }
    return 2.0 * dev;
}

FitResult fit_poisson_fe(const RegressionSpec& spec, const FitOptions& opt) {
    const Eigen::Index n_all = spec.y.size();
    const Eigen::Index ke = spec.exposures.cols();
    const Eigen::Index kc = spec.covariates.cols();
    if (n_all == 0) throw ValidationError("fit_poisson_fe: empty outcome");
    if (ke > 0 && spec.exposures.rows() != n_all)
        throw InternalError("fit_poisson_fe: exposure row mismatch");
    if (kc > 0 && spec.covariates.rows() != n_all)
        throw InternalError("fit_poisson_fe: covariate row mismatch");
    if (static_cast<Eigen::Index>(spec.exposure_names.size()) != ke ||
        static_cast<Eigen::Index>(spec.covariate_names.size()) != kc)
        throw InternalError("fit_poisson_fe: name/column mismatch");
    const bool has_a = !spec.fe_a.empty();
    const bool has_b = !spec.fe_b.empty();
    if ((has_a && static_cast<Eigen::Index>(spec.fe_a.size()) != n_all) ||
        (has_b && static_cast<Eigen::Index>(spec.fe_b.size()) != n_all))
        throw InternalError("fit_poisson_fe: factor length mismatch");
    const bool has_offset = spec.offset.size() > 0;
    if (has_offset && spec.offset.size() != n_all)
        throw InternalError("fit_poisson_fe: offset length mismatch");
    const bool has_pw = spec.prior_weights.size() > 0;
    if (has_pw && spec.prior_weights.size() != n_all)
        throw InternalError("fit_poisson_fe: prior weight length mismatch");
    const bool add_intercept = !has_a && !has_b;

    // Complete-case mask over the used columns.
    std::vector<char> use(n_all, 1);
    for (Eigen::Index i = 0; i < n_all; ++i) {
        if (std::isnan(spec.y(i)) || spec.y(i) < 0.0) use[i] = 0;
        if (has_offset && !std::isfinite(spec.offset(i))) use[i] = 0;
        if (has_pw) {
            double pw = spec.prior_weights(i);
            if (std::isnan(pw) || pw < 0.0)
                throw ValidationError("fit_poisson_fe: prior weights must be non-negative");
            if (pw == 0.0) use[i] = 0;
        }
        for (Eigen::Index j = 0; j < ke && use[i]; ++j)
            if (!std::isfinite(spec.exposures(i, j))) use[i] = 0;
        for (Eigen::Index j = 0; j < kc && use[i]; ++j)
            if (!std::isfinite(spec.covariates(i, j))) use[i] = 0;
    }

    auto distinct_levels = [&](const std::vector<int>& f) {
        std::set<int> s;
        for (Eigen::Index i = 0; i < n_all; ++i)
            if (use[i]) s.insert(f[i]);
        return s.size();
    };
    std::size_t levels_a0 = has_a ? distinct_levels(spec.fe_a) : 0;
    std::size_t levels_b0 = has_b ? distinct_levels(spec.fe_b) : 0;

    // FE levels whose outcome is all zero push their intercept to -inf;
    // drop their rows before fitting, iterating because removals can empty
    // levels of the other factor.
    if (has_a || has_b) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (int which = 0; which < 2; ++which) {
                const std::vector<int>& f = which == 0 ? spec.fe_a : spec.fe_b;
                if (f.empty()) continue;
                std::map<int, double> ysum;
                for (Eigen::Index i = 0; i < n_all; ++i)
                    if (use[i]) ysum[f[i]] += spec.y(i);
                for (Eigen::Index i = 0; i < n_all; ++i) {
                    if (use[i] && ysum[f[i]] == 0.0) {
                        use[i] = 0;
                        changed = true;
                    }
                }
            }
        }
    }

    FitResult out;
    for (Eigen::Index i = 0; i < n_all; ++i)
        if (use[i]) out.used_rows.push_back(static_cast<int>(i));
    const Eigen::Index n = static_cast<Eigen::Index>(out.used_rows.size());
    if (n == 0) throw ValidationError("fit_poisson_fe: no usable rows");

    out.dropped_fe_a = has_a ? static_cast<int>(levels_a0 - distinct_levels(spec.fe_a)) : 0;
    out.dropped_fe_b = has_b ? static_cast<int>(levels_b0 - distinct_levels(spec.fe_b)) : 0;

    // Compact working arrays.
    Eigen::VectorXd y(n), off = Eigen::VectorXd::Zero(n), pw = Eigen::VectorXd::Ones(n);
    const Eigen::Index k_all = ke + kc + (add_intercept ? 1 : 0);
    Eigen::MatrixXd M(n, k_all);
    std::vector<int> fa_raw, fb_raw, cl_raw;
    fa_raw.reserve(has_a ? n : 0);
    fb_raw.reserve(has_b ? n : 0);
    const bool has_cluster = !spec.cluster.empty();
    if (has_cluster && spec.cluster.size() != static_cast<std::size_t>(n_all))
        throw InternalError("fit_poisson_fe: cluster length mismatch");
    for (Eigen::Index r = 0; r < n; ++r) {
        Eigen::Index i = out.used_rows[r];
        y(r) = spec.y(i);
        if (has_offset) off(r) = spec.offset(i);
        if (has_pw) pw(r) = spec.prior_weights(i);
        for (Eigen::Index j = 0; j < ke; ++j) M(r, j) = spec.exposures(i, j);
        for (Eigen::Index j = 0; j < kc; ++j) M(r, ke + j) = spec.covariates(i, j);
        if (add_intercept) M(r, ke + kc) = 1.0;
        if (has_a) fa_raw.push_back(spec.fe_a[i]);
        if (has_b) fb_raw.push_back(spec.fe_b[i]);
        cl_raw.push_back(has_cluster ? spec.cluster[i] : static_cast<int>(r));
    }
    std::vector<int> fa = has_a ? recode(fa_raw) : std::vector<int>{};
    std::vector<int> fb = has_b ? recode(fb_raw) : std::vector<int>{};
    out.cluster_used = recode(cl_raw);
    out.n_clusters = level_count(out.cluster_used);

    out.names = spec.exposure_names;
    out.names.insert(out.names.end(), spec.covariate_names.begin(), spec.covariate_names.end());
    if (add_intercept) out.names.push_back("(intercept)");

    // Unidentifiable columns are detected once with unit weights: exact
    // collinearity survives any positive reweighting. A column absorbed by
    // the factors, or dependent on earlier kept columns after demeaning,
    // loses; covariates drop with a diagnostic, exposures are a hard error.
    std::vector<char> col_kept(k_all, 1);
    {
        Eigen::MatrixXd Md = M;
        if (has_a || has_b) demean(Md, fa, fb, Eigen::VectorXd::Ones(n), opt.demean);
        std::vector<Eigen::VectorXd> basis;
        for (Eigen::Index j = 0; j < k_all; ++j) {
            const double base = M.col(j).norm() + 1.0;
            if ((has_a || has_b) && Md.col(j).norm() / base < opt.collinear_tol) {
                if (j < ke)
                    throw NumericError("exposure '" + out.names[j] +
                                       "' has no variation after fixed-effect demeaning");
                col_kept[j] = 0;
                out.dropped_covariates++;
                continue;
            }
            Eigen::VectorXd v = Md.col(j);
            for (int pass = 0; pass < 2; ++pass)
                for (const Eigen::VectorXd& q : basis) v -= q.dot(v) * q;
            if (v.norm() / base < opt.collinear_tol) {
                if (j < ke)
                    throw NumericError("exposure '" + out.names[j] +
                                       "' is collinear with earlier regressors");
                col_kept[j] = 0;
                out.dropped_covariates++;
            } else {
                basis.push_back(v / v.norm());
            }
        }
    }
    for (Eigen::Index j = 0; j < k_all; ++j)
        if (col_kept[j]) out.kept.push_back(static_cast<int>(j));
    const Eigen::Index k = static_cast<Eigen::Index>(out.kept.size());
    if (k == 0) throw ConfigError("fit_poisson_fe: no identifiable regressors remain");
    Eigen::MatrixXd Mk(n, k);
    for (Eigen::Index j = 0; j < k; ++j) Mk.col(j) = M.col(out.kept[j]);

    // IRLS: demean the working response and design at the current weights,
    // solve the weighted least squares, rebuild the linear predictor through
    // the projected-out fixed-effect part z - z~.
    Eigen::VectorXd mu = y.array() + 0.5;
    Eigen::VectorXd eta = mu.array().log();
    double dev = poisson_deviance(y, mu, pw);
    Eigen::MatrixXd ZM(n, k + 1);
    Eigen::VectorXd b(k);
    bool converged = false;
    int iterations = 0;
    int step_no = 0;

    auto irls_step = [&]() {
        ++step_no;
        Eigen::VectorXd w = pw.cwiseProduct(mu);
        Eigen::VectorXd z = (eta - off) + (y - mu).cwiseQuotient(mu);
        ZM.col(0) = z;
        ZM.rightCols(k) = Mk;
        demean(ZM, fa, fb, w, opt.demean);
        Eigen::MatrixXd Xt = ZM.rightCols(k);
        Eigen::VectorXd zt = ZM.col(0);
        Eigen::MatrixXd G = Xt.transpose() * w.asDiagonal() * Xt;
        Eigen::VectorXd rhs = Xt.transpose() * w.cwiseProduct(zt);
        Eigen::VectorXd b_new = solve_gram(G, rhs);
        Eigen::VectorXd eta_new = off + (z - zt) + Xt * b_new;

        // The start is the saturated fit, whose deviance sits below any
        // model-constrained optimum, so the first step must be accepted on
        // finiteness alone; monotone halving only applies once eta lies in
        // the model space.
        const bool monotone = step_no > 1;
        double dev_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd mu_new;
        for (int halving = 0; halving <= 30; ++halving) {
            if (eta_new.maxCoeff() < 700.0) {
                mu_new = eta_new.array().exp();
                dev_new = poisson_deviance(y, mu_new, pw);
                if (std::isfinite(dev_new) &&
                    (!monotone || dev_new <= dev + 1e-8 * (std::fabs(dev) + 1.0)))
                    break;
            }
            if (halving == 30)
                throw NumericError("IRLS step failed to reduce the deviance (possible separation)");
            eta_new = 0.5 * (eta + eta_new);
        }
        eta = eta_new;
        mu = mu_new;
        b = b_new;
        double change = std::fabs(dev_new - dev) / (std::fabs(dev_new) + 0.1);
        dev = dev_new;
        return change;
    };

    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        iterations = iter;
        double change = irls_step();
        if (change < opt.tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw NumericError("fit_poisson_fe did not converge in " + std::to_string(opt.max_iter) +
                           " IRLS iterations");
    // One polishing Newton step past the tolerance so coefficients are at
    // machine-level stationarity, then a final demeaning at the final
    // weights to make the stored design consistent with the sandwich.
    irls_step();
    iterations++;

    Eigen::VectorXd w_final = pw.cwiseProduct(mu);
    Eigen::MatrixXd Xt_final = Mk;
    demean(Xt_final, fa, fb, w_final, opt.demean);
    Eigen::MatrixXd G = Xt_final.transpose() * w_final.asDiagonal() * Xt_final;
    Eigen::MatrixXd bread_inv;
    solve_gram(G, Eigen::VectorXd::Zero(k), &bread_inv);

    out.coef = Eigen::VectorXd::Constant(k_all, std::nan(""));
    for (Eigen::Index j = 0; j < k; ++j) out.coef(out.kept[j]) = b(j);
    out.deviance = dev;
    out.n_obs = static_cast<int>(n);
    out.iterations = iterations;
    out.converged = true;
    out.fitted = mu;
    out.eta = eta;
    out.design_demeaned = std::move(Xt_final);
    out.work_weights = std::move(w_final);
    out.resid = y - mu;
    out.bread_inv = std::move(bread_inv);
    out.vcov_model = out.bread_inv;
    out.vcov = cluster_vcov(out, out.cluster_used, opt.df_correction);
    return out;
}

Eigen::MatrixXd cluster_vcov(const FitResult& fit, const std::vector<int>& cluster,
                             bool df_correction) {
    const Eigen::Index n = fit.design_demeaned.rows();
    const Eigen::Index k = fit.design_demeaned.cols();
    std::vector<int> cl;
    if (cluster.empty()) {
        cl.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) cl[i] = static_cast<int>(i);
    } else if (static_cast<Eigen::Index>(cluster.size()) == n) {
        cl = recode(cluster);
    } else {
        throw InternalError("cluster_vcov: cluster vector must cover the fit's used rows");
    }
    int n_g = level_count(cl);
    if (n_g < 2 && n > 1)
        throw ValidationError("cluster_vcov: at least 2 clusters required");

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n_g, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        double prior = fit.work_weights(i) / fit.fitted(i);
        S.row(cl[i]) += prior * fit.resid(i) * fit.design_demeaned.row(i);
    }
    Eigen::MatrixXd meat = S.transpose() * S;
    if (df_correction && n_g > 1)
        meat *= static_cast<double>(n_g) / static_cast<double>(n_g - 1);
    return fit.bread_inv * meat * fit.bread_inv;
}

RateIncrease rate_increase(double beta, double se) {
    RateIncrease r;
    r.pct = (std::exp(beta) - 1.0) * 100.0;
    if (std::isnan(se) || se < 0.0) {
        r.lo = std::nan("");
        r.hi = std::nan("");
    } else {
        r.lo = (std::exp(beta - kZ975 * se) - 1.0) * 100.0;
        r.hi = (std::exp(beta + kZ975 * se) - 1.0) * 100.0;
    }
    return r;
}

} // namespace waterscreen
