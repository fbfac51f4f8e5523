#pragma once

// Scaling benchmark: seconds per outer iteration of the plain fitter on planted data.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace aa::bench {

struct Options {
    std::vector<Eigen::Index> n_values{1000};
    std::vector<Eigen::Index> p_values{16};
    Eigen::Index m = 784;
    std::uint64_t seed = 0;
    int reps = 3;
    /// Outer iterations per run; the first one is excluded from timing.
    Eigen::Index iterations = 6;
    unsigned threads = 1;
};

struct Row {
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    /// Median over repetitions of the mean time per timed iteration.
    double seconds = 0.0;
    /// Standard deviation of the per-repetition means.
    double stddev = 0.0;
};

/// Mean seconds per outer iteration of a single fit, skipping iteration 1.
double seconds_per_iteration(const Eigen::MatrixXd& X, Eigen::Index p, Eigen::Index iterations,
                             std::uint64_t seed, unsigned threads);

Row measure(Eigen::Index m, Eigen::Index n, Eigen::Index p, const Options& options);

/// Every (n, p) pair from the option grids, n varying slowest.
std::vector<Row> run(const Options& options);

/// Tab-separated with a header line.
void write_table(std::ostream& out, const std::vector<Row>& rows);

}  // namespace aa::bench
