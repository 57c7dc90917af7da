"""
Test suite for holoflow.

Test Organization:
- test_molgraph.py: SMILES parsing, Laplacians, automorphisms
- test_structures.py: PDB and trajectory I/O, complex states
- test_geometry.py: Kabsch, RMSD, TM-score, pocket alignment
- test_priors.py: harmonic and template priors
- test_flow.py: CondOT path, VD-ODE sampler, integration
- test_coupling.py: apo/holo pair filtering
- test_fieldnet.py: network, gradients, checkpoints
- test_pipeline.py: training, confidence, generation
- test_evaluation.py: symmetry RMSD, success rate, affinity metrics
- test_cli.py: command-line front end
"""
