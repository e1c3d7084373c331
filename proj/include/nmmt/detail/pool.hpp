#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <string>
#include <thread>

namespace nmmt {

template <typename T>
std::vector<std::optional<T>> run_indexed(Index count, int jobs, const std::function<T(Index)>& task,
                                          std::vector<std::string>* errors)
{
    std::vector<std::optional<T>> out(static_cast<std::size_t>(count));
    std::vector<std::string> messages(static_cast<std::size_t>(count));
    std::atomic<Index> next{0};
    auto worker = [&] {
        for (Index r = next++; r < count; r = next++) {
            try {
                out[static_cast<std::size_t>(r)] = task(r);
            } catch (const std::exception& e) {
                out[static_cast<std::size_t>(r)].reset();
                messages[static_cast<std::size_t>(r)] = e.what();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (errors) {
        *errors = std::move(messages);
    }
    return out;
}

} // namespace nmmt
