# Library modules for one-to-one translation: autodiff, nn, optim, gan, data, metrics, config
