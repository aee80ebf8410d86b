"""Sound-field magnitude reconstruction from sparse observations.

Modules
-------
fields, dataset
    Simulators for diffuse, near-field, image-source and modal fields and
    the ``SFD1`` dataset container.
gp
    Gaussian-process kernels, posterior mean and MAP hyperparameter fitting.
autodiff, nn, optim
    Reverse-mode autodiff, attention layers and Adam.
npmodel, training, checkpoint
    The attentive neural process, its training loop and ``NPC1`` checkpoints.
metrics, benchmark, pgm, cli
    Evaluation, CSV reports, heatmaps and the ``sfrecon`` command.
"""

__version__ = "0.1.0"
