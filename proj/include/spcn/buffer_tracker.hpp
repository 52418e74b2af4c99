#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>

namespace spcn {

// Counts live intermediate pixel storage, in pixels, across every buffer that
// uses TrackingAllocator. Tests read the high-water mark to check the
// streaming memory bound.
class PixelBufferStats {
 public:
  static PixelBufferStats& instance();

  void add(std::int64_t pixels) noexcept {
    const auto now = live_.fetch_add(pixels, std::memory_order_relaxed) + pixels;
    auto peak = peak_.load(std::memory_order_relaxed);
    while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }
  void remove(std::int64_t pixels) noexcept { live_.fetch_sub(pixels, std::memory_order_relaxed); }

  std::int64_t live() const noexcept { return live_.load(std::memory_order_relaxed); }
  std::int64_t peak() const noexcept { return peak_.load(std::memory_order_relaxed); }

  // Resets the high-water mark to the current live count.
  void reset_peak() noexcept { peak_.store(live(), std::memory_order_relaxed); }

 private:
  std::atomic<std::int64_t> live_{0};
  std::atomic<std::int64_t> peak_{0};
};

// std::allocator wrapper that reports n / SamplesPerPixel pixels per allocation.
template <class T, std::size_t SamplesPerPixel>
struct TrackingAllocator {
  using value_type = T;

  template <class U>
  struct rebind {
    using other = TrackingAllocator<U, SamplesPerPixel>;
  };

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U, SamplesPerPixel>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    PixelBufferStats::instance().add(static_cast<std::int64_t>(n / SamplesPerPixel));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    PixelBufferStats::instance().remove(static_cast<std::int64_t>(n / SamplesPerPixel));
    std::allocator<T>{}.deallocate(p, n);
  }

  friend bool operator==(const TrackingAllocator&, const TrackingAllocator&) noexcept { return true; }
};

}  // namespace spcn
