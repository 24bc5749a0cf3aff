// Copyright 2026 the fairitr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <cstddef>
#include <future>
#include <thread>
#include <vector>

namespace fairitr {

/// Apply fn(i) for i in [0, count) and collect results by index. Work items
/// must be independent (each owns its RNG substream), so the assembly is
/// deterministic for any thread count.
template <typename Fn>
auto parallel_map(std::size_t count, int threads, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{0}))> {
    using R = decltype(fn(std::size_t{0}));
    std::vector<R> out(count);
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::future<void>> jobs;
    std::atomic<std::size_t> next{0};
    const int workers = std::min<int>(threads, static_cast<int>(count));
    for (int w = 0; w < workers; ++w)
        jobs.push_back(std::async(std::launch::async, [&]() {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) out[i] = fn(i);
        }));
    for (auto& j : jobs) j.get();
    return out;
}

inline int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace fairitr
