#!/usr/bin/env python3
"""Walkthrough: the calibrated cloud-vs-edge latency experiments.

Runs the 60-request creation benchmark, the latest-instance retrieval
comparison, and the slice preparation timing with warm and cold caches.
"""
from edgeslice import (
    reference_calibrated,
    run_benchmark,
    run_preparation_timing,
    run_retrieval_comparison,
    summarize,
)
from edgeslice.bench import mean_rtt

config = reference_calibrated()
print("scenario:", config.name)
print("slice functions:", ", ".join(sorted(f.name.lower() for f in config.functions)))

print("\n== instance creation, 60 requests per mode ==")
samples = run_benchmark(config, "create")
for row in summarize(samples):
    print(
        f"  {row.mode:>5}: mean {row.mean_ms:7.3f} ms"
        f"  median {row.median_ms:7.3f}  p95 {row.p95_ms:7.3f}"
    )
gap = mean_rtt(samples, "cloud", "create") - mean_rtt(samples, "edge", "create")
print(f"  edge advantage: {gap:.1f} ms per create")

print("\n== latest-instance retrieval, 60 requests per mode ==")
comparison = run_retrieval_comparison(config)
print(f"  cloud mean: {comparison.cloud_mean_ms:.2f} ms")
print(f"  edge  mean: {comparison.edge_mean_ms:.2f} ms")
print(f"  ratio: {comparison.ratio:.2f}x faster at the edge")

print("\n== slice preparation, 10 measurements ==")
warm = run_preparation_timing(config, repetitions=10)
print(f"  warm image cache: {warm.mean_ms:9.1f} ms "
      "(control-plane round trips + container starts)")
cold = run_preparation_timing(config, repetitions=10, cold_cache=True)
print(f"  cold image cache: {cold.mean_ms:9.1f} ms "
      f"(adds {cold.mean_ms - warm.mean_ms:.0f} ms of image pulls)")
print("  -> pre-seeding function images on workers pays for itself")
