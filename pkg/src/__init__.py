# Augmentation Benchmark Package
