"""
CLI command modules for hlcomp.

This package contains the subcommands that tie the library into
reproducible experiments:
- spacing: center-frequency lists and GNR sweeps
- compensate: optimal compensation gain and FIR export
- signals: Welch gain analysis, loss metrics, test noise and FIR filtering
- prescribe: NAL-R insertion gain
"""
