import { ApiClient } from './api.js';
import { UiController } from './controller.js';
import { ExperimentView } from './view.js';

// single configuration knob: the service endpoint (?api=... overrides)
const params = new URLSearchParams(window.location.search);
const endpoint = params.get('api') ?? 'http://127.0.0.1:8666';
const participant = params.get('participant') ?? `anon-${Date.now() % 100000}`;
const seed = Number(params.get('seed') ?? Math.floor(Math.random() * 1e6));

const api = new ApiClient(endpoint);
const controller = new UiController(api);

const container = document.getElementById('app');
if (!container) throw new Error('missing #app container');
new ExperimentView(container, controller);

controller.start(participant, seed).catch((err) => {
  container.innerHTML = `<div class="banner">cannot reach the session service at ${endpoint}: ${err}</div>`;
});
