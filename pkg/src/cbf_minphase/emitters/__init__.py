"""Trajectory emitters."""

from .csv_trajectory import build_trajectory_csv, parse_trajectory_csv, trajectory_header

__all__ = ["build_trajectory_csv", "parse_trajectory_csv", "trajectory_header"]
