import { startApp } from './app.js';

startApp().catch((error) => {
  const box = document.getElementById('phase');
  if (box) box.textContent = `error: ${error}`;
  console.error(error);
});
