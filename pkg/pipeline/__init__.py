"""
Evaluation strategies, strategy dispatch and benchmarks
"""