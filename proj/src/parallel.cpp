#include "nsb/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace nsb {

int thread_count() {
    static const int count = [] {
        const int fallback = omp_get_max_threads();
        if (const char* env = std::getenv("NSB_THREADS")) {
            try {
                const int n = std::stoi(env);
                if (n >= 1) return n;
            } catch (const std::exception&) {
            }
        }
        return fallback;
    }();
    return count;
}

}  // namespace nsb
