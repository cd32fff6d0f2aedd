#include <atomic>
#include <csignal>
#include <iostream>

#include "sat/cli.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_sigint(int) { g_stop.store(true); }

} // namespace

int main(int argc, char** argv) {
    // No SA_RESTART: a blocking stdin read returns so the stream can wind down.
    struct sigaction sa {};
    sa.sa_handler = on_sigint;
    sigemptyset(&sa.sa_mask);
    sa.sa_flags = 0;
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);

    std::ios::sync_with_stdio(true);
    return sat::cli::run(argc, argv, std::cin, std::cout, std::cerr, &g_stop);
}
