#pragma once

#include <cstdint>
#include <vector>

namespace tmvit {

enum class MacSection { Other = 0, Embed, Blocks, Fusion, Head };

// Tallies multiply-accumulate counts for every matmul and convolution that
// runs while the counter is installed (see MacScope). A counter belongs to a
// single forward execution; it is never shared across threads.
class MacCounter {
public:
    struct BlockRow {
        int layer = 0;    // 1-based transformer layer
        int tokens = 0;   // sequence length at block entry
        std::uint64_t macs = 0;
    };

    void set_section(MacSection s) { section_ = s; }

    // Opens a per-block tally row; implies section Blocks until end_block().
    void begin_block(int layer, int tokens);
    void end_block();

    void add(std::uint64_t macs);
    void reset();

    std::uint64_t total() const { return total_; }
    std::uint64_t section(MacSection s) const { return by_section_[static_cast<int>(s)]; }
    const std::vector<BlockRow>& per_block() const { return rows_; }

private:
    std::uint64_t total_ = 0;
    std::uint64_t by_section_[5] = {0, 0, 0, 0, 0};
    MacSection section_ = MacSection::Other;
    std::vector<BlockRow> rows_;
    bool in_block_ = false;
};

// Installs a counter as the thread-local tally target for tensor ops and
// removes it again on scope exit. Nesting restores the previous counter.
class MacScope {
public:
    explicit MacScope(MacCounter& counter);
    ~MacScope();

    MacScope(const MacScope&) = delete;
    MacScope& operator=(const MacScope&) = delete;

private:
    MacCounter* prev_;
};

namespace detail {
// Called by matmul/conv implementations; no-op when no counter is installed.
void mac_add(std::uint64_t n);
} // namespace detail

} // namespace tmvit
