#include "aa/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "aa/archetypal.hpp"
#include "aa/error.hpp"
#include "aa/synthetic.hpp"

namespace aa::bench {

double seconds_per_iteration(const Eigen::MatrixXd& X, Index p, Index iterations,
                             std::uint64_t seed, unsigned threads) {
    if (iterations < 2) throw ParameterError("bench: need at least 2 iterations");
    FitConfig<double> cfg;
    cfg.p = p;
    cfg.iterations = iterations;
    cfg.seed = seed;
    cfg.threads = threads;
    const auto model = fit(X, cfg);
    const auto& t = model.iteration_seconds;
    return std::accumulate(t.begin() + 1, t.end(), 0.0) / double(t.size() - 1);
}

Row measure(Index m, Index n, Index p, const Options& options) {
    if (options.reps < 1) throw ParameterError("bench: reps must be >= 1");
    std::vector<double> per_rep;
    for (int r = 0; r < options.reps; ++r) {
        const std::uint64_t seed = options.seed + std::uint64_t(r);
        const auto data = synthetic::planted_mixture(m, n, p, seed);
        per_rep.push_back(seconds_per_iteration(data.X, p, options.iterations, seed, options.threads));
    }
    Row row{n, p, 0.0, 0.0};
    const double mean = std::accumulate(per_rep.begin(), per_rep.end(), 0.0) / double(per_rep.size());
    double var = 0.0;
    for (double v : per_rep) var += (v - mean) * (v - mean);
    row.stddev = per_rep.size() > 1 ? std::sqrt(var / double(per_rep.size() - 1)) : 0.0;
    std::sort(per_rep.begin(), per_rep.end());
    const std::size_t k = per_rep.size();
    row.seconds = k % 2 ? per_rep[k / 2] : 0.5 * (per_rep[k / 2 - 1] + per_rep[k / 2]);
    return row;
}

std::vector<Row> run(const Options& options) {
    std::vector<Row> rows;
    for (Index n : options.n_values)
        for (Index p : options.p_values) rows.push_back(measure(options.m, n, p, options));
    return rows;
}

void write_table(std::ostream& out, const std::vector<Row>& rows) {
    out << "n\tp\tseconds_per_iteration\tstddev\n";
    for (const auto& r : rows) out << r.n << '\t' << r.p << '\t' << r.seconds << '\t' << r.stddev << '\n';
}

}  // namespace aa::bench
