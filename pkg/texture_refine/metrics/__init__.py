"""Image similarity measures and the same-view / novel-view evaluation."""
