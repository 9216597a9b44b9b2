#include "uierl/runtime.hpp"

#include <cstdlib>
#include <thread>

extern "C" void openblas_set_num_threads(int);

namespace uierl {

namespace {
int g_threads = 1;
}

int init_runtime() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("UIERL_NUM_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) n = v;
    }
    openblas_set_num_threads(n);
    g_threads = n;
    return n;
}

int num_threads() { return g_threads; }

} // namespace uierl
