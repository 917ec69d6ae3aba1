// Timing comparison of the OpenMP kernels against their serial references.
// Not a correctness test; the test suites assert equality of the outputs.

#include <omp.h>

#include <cstdio>
#include <random>
#include <string>

#include "pme/curvature.hpp"
#include "pme/graph.hpp"
#include "pme/la.hpp"
#include "pme/metrics.hpp"
#include "pme/product.hpp"

using namespace pme;

namespace {

struct Timed {
    double seconds;
    double checksum;
};

template <typename F>
Timed timed(F&& f) {
    const double t0 = omp_get_wtime();
    const double checksum = f();
    return {omp_get_wtime() - t0, checksum};
}

void report(const char* name, const Timed& serial, const Timed& parallel) {
    std::printf("%-28s serial %8.3fs   parallel %8.3fs   speedup %5.2fx   |delta| %.3e\n", name, serial.seconds,
                parallel.seconds, serial.seconds / std::max(parallel.seconds, 1e-9),
                std::abs(serial.checksum - parallel.checksum));
}

}  // namespace

int main(int argc, char** argv) {
    int n = 3000;
    if (argc > 1) n = std::stoi(argv[1]);
    std::printf("kernel benchmark, n = %d nodes, %d thread(s)\n\n", n, omp_get_max_threads());

    const Graph g = generate_tree(2, n);

    const Timed apsp_serial_t = timed([&] {
        const DistanceMatrix d = apsp_serial(g);
        return static_cast<double>(d.at(0, n - 1));
    });
    const Timed apsp_par_t = timed([&] {
        const DistanceMatrix d = apsp(g);
        return static_cast<double>(d.at(0, n - 1));
    });
    report("apsp (BFS per source)", apsp_serial_t, apsp_par_t);

    const DistanceMatrix dist = apsp(g);
    Signature sig = parse_signature("h3,s3,e4");
    std::mt19937_64 rng(0);
    PointTable pts(n, sig.total_ambient_dim);
    for (int i = 0; i < n; ++i) la::copy(random_product_point(sig, 0.3, rng).coords, pts.row(i));

    const Timed dist_serial = timed([&] { return avg_distortion_serial(dist, sig, pts); });
    const Timed dist_par = timed([&] { return avg_distortion(dist, sig, pts); });
    report("avg_distortion (all pairs)", dist_serial, dist_par);

    const Timed map_serial = timed([&] { return map_score_serial(g, sig, pts); });
    const Timed map_par = timed([&] { return map_score(g, sig, pts); });
    report("map_score", map_serial, map_par);

    const int budget = 60;
    const Timed curv_serial = timed([&] {
        // serial reference: same per-node estimates, sequential loop
        double acc = 0.0;
        for (int v = 0; v < g.n; ++v) {
            std::mt19937_64 node_rng(7 ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(v + 1)));
            const double xi = node_curvature(g, dist, v, budget, node_rng);
            if (std::isfinite(xi)) acc += xi;
        }
        return acc;
    });
    const Timed curv_par = timed([&] {
        const CurvatureSummary s = curvature_summary(g, dist, budget, 7);
        double acc = 0.0;
        for (double xi : s.node_mean)
            if (std::isfinite(xi)) acc += xi;
        return acc;
    });
    report("curvature summary", curv_serial, curv_par);

    return 0;
}
