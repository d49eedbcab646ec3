"""
hlcomp: MSE-optimal linear hearing-loss compensation with gammatone
filterbank auditory models.
"""
