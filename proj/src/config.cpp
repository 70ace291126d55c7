#include "conservkit/config.hpp"

#include <atomic>

namespace ck {

namespace {
std::atomic<int> g_jet_cap{32};
}

int jet_cap() { return g_jet_cap.load(std::memory_order_relaxed); }

void set_jet_cap(int n) {
    if (n < 4) throw std::invalid_argument("jet cap must be at least 4");
    g_jet_cap.store(n, std::memory_order_relaxed);
}

}  // namespace ck
