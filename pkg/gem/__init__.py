# General Effect Modelling package
