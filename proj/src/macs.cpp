#include "tmvit/macs.hpp"

namespace tmvit {

namespace {
thread_local MacCounter* g_active = nullptr;
}

void MacCounter::begin_block(int layer, int tokens) {
    rows_.push_back(BlockRow{layer, tokens, 0});
    in_block_ = true;
    section_ = MacSection::Blocks;
}

void MacCounter::end_block() {
    in_block_ = false;
    section_ = MacSection::Other;
}

void MacCounter::add(std::uint64_t macs) {
    total_ += macs;
    by_section_[static_cast<int>(section_)] += macs;
    if (in_block_ && !rows_.empty()) {
        rows_.back().macs += macs;
    }
}

void MacCounter::reset() {
    total_ = 0;
    for (auto& s : by_section_) s = 0;
    section_ = MacSection::Other;
    rows_.clear();
    in_block_ = false;
}

MacScope::MacScope(MacCounter& counter) : prev_(g_active) {
    g_active = &counter;
}

MacScope::~MacScope() {
    g_active = prev_;
}

namespace detail {

void mac_add(std::uint64_t n) {
    if (g_active) g_active->add(n);
}

} // namespace detail

} // namespace tmvit
